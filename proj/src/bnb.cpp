#include "zubov/bnb.hpp"

#include <chrono>
#include <cmath>
#include <stdexcept>

namespace zubov {

std::string to_string(VerifyOutcome::Kind kind) {
  switch (kind) {
    case VerifyOutcome::Kind::Certified:
      return "certified";
    case VerifyOutcome::Kind::Falsified:
      return "falsified";
    case VerifyOutcome::Kind::Unknown:
      return "unknown";
    case VerifyOutcome::Kind::BudgetExhausted:
      return "budget_exhausted";
  }
  return "unknown";
}

bool Condition::violated_at(std::span<const double> x, double* margin) const {
  try {
    for (const auto& g : antecedents) {
      const double v = g.eval(x);
      if (!(v <= 0.0)) return false;
    }
    const double h = consequent.eval(x);
    if (margin) *margin = h;
    return strict ? !(h < 0.0) : !(h <= 0.0);
  } catch (const DomainError&) {
    return false;
  }
}

namespace {

enum class BoxVerdict { Discard, Split };

BoxVerdict classify(const Condition& cond, Box& B) {
  for (const auto& g : cond.antecedents) {
    if (g.contract && !g.contract(B)) return BoxVerdict::Discard;
    const auto iv = g.enclose(B);
    if (iv && iv->lo > 0.0) return BoxVerdict::Discard;
  }
  const auto h = cond.consequent.enclose(B);
  if (h && (cond.strict ? h->hi < 0.0 : h->hi <= 0.0)) return BoxVerdict::Discard;
  return BoxVerdict::Split;
}

}  // namespace

VerifyOutcome bnb_verify(const Condition& cond, const Box& X, const BnbOptions& opts) {
  if (!(opts.delta > 0)) throw std::invalid_argument("delta must be positive");
  if (opts.budget < 1) throw std::invalid_argument("budget must be >= 1");
  if (X.dim() == 0) throw std::invalid_argument("empty search box");
  const auto start = std::chrono::steady_clock::now();
  auto finish = [&](VerifyOutcome out) {
    out.delta = opts.delta;
    out.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return out;
  };

  VerifyOutcome out;
  std::optional<Box> undecided;
  std::vector<Box> stack{X};
  while (!stack.empty()) {
    if (out.boxes_explored >= opts.budget) {
      out.kind = VerifyOutcome::Kind::BudgetExhausted;
      out.box = stack.back();
      return finish(std::move(out));
    }
    Box B = std::move(stack.back());
    stack.pop_back();
    ++out.boxes_explored;

    auto probes = std::vector<std::vector<double>>{B.center()};
    if (classify(cond, B) == BoxVerdict::Discard) continue;

    if (auto c = B.center(); c != probes.front()) probes.insert(probes.begin(), std::move(c));
    for (auto& c : probes) {
      double margin = 0.0;
      if (cond.violated_at(c, &margin)) {
        out.kind = VerifyOutcome::Kind::Falsified;
        out.witness = std::move(c);
        out.margin = margin;
        return finish(std::move(out));
      }
    }
    if (B.max_width() <= opts.delta) {
      // keep looking for a real counterexample elsewhere
      if (!undecided) undecided = std::move(B);
      continue;
    }
    auto [left, right] = B.split(B.widest_axis());
    stack.push_back(std::move(right));
    stack.push_back(std::move(left));
  }
  if (undecided) {
    out.kind = VerifyOutcome::Kind::Unknown;
    out.box = std::move(*undecided);
    return finish(std::move(out));
  }
  out.kind = VerifyOutcome::Kind::Certified;
  return finish(std::move(out));
}

}  // namespace zubov
