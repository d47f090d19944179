#pragma once

#include <cstddef>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "zubov/interval.hpp"

namespace zubov {

class SmtWriter;

/// Scalar constraint function, usable both over boxes and at points.
/// `enclose` may return nullopt when no finite enclosure exists on the box.
struct ScalarFn {
  std::string label;
  std::function<std::optional<Interval>(const Box&)> enclose;
  std::function<double(std::span<const double>)> eval;
  /// SMT-LIB term for the function; left empty when not expressible.
  std::function<std::string(SmtWriter&)> smt;
  /// Optional: shrinks a box towards {x : fn(x) <= 0}; false when none remain.
  std::function<bool(Box&)> contract;
};

/// forall x in X: (all g_k(x) <= 0) => h(x) <= 0, or h(x) < 0 when strict.
struct Condition {
  std::string label;
  std::vector<ScalarFn> antecedents;
  ScalarFn consequent;
  bool strict = false;

  /// True when x is a counterexample under point evaluation.
  bool violated_at(std::span<const double> x, double* margin = nullptr) const;
};

struct VerifyOutcome {
  enum class Kind { Certified, Falsified, Unknown, BudgetExhausted };

  Kind kind = Kind::Certified;
  std::vector<double> witness;  // Falsified
  double margin = 0.0;          // Falsified: h(witness)
  Box box;                      // Unknown: the undecided delta-box
  double delta = 0.0;
  std::size_t boxes_explored = 0;
  double wall_seconds = 0.0;

  bool certified() const { return kind == Kind::Certified; }
};

std::string to_string(VerifyOutcome::Kind kind);

struct BnbOptions {
  double delta = 1e-3;
  std::size_t budget = 5'000'000;
};

/// Depth-first interval branch and bound over X. Antecedents with a
/// contractor first shrink the box. A box is dropped when an antecedent is
/// infeasible on it (lower bound > 0) or the consequent holds on all of it;
/// otherwise it is split at the midpoint of its widest axis. The centers of
/// every undecided box, before and after contraction, are probed, so a
/// counterexample may be reported before
/// boxes reach delta. Boxes no wider than delta that stay undecided are set
/// aside while the search continues; if no counterexample turns up the
/// first of them is reported as Unknown. Hitting the budget gives
/// BudgetExhausted.
VerifyOutcome bnb_verify(const Condition& cond, const Box& X, const BnbOptions& opts = {});

}  // namespace zubov
