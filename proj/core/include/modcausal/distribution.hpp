#pragma once

#include <string>
#include <vector>

#include "modcausal/admg.hpp"

namespace modcausal {

/// A dense probability table over named discrete variables, optionally
/// conditioned on a second group of variables. Layout is row-major with the
/// conditioning axes outermost, so each conditioning setting owns a
/// contiguous slice that sums to 1.
struct Distribution {
  std::vector<std::string> vars;
  std::vector<int> cards;
  std::vector<std::string> cond_vars;
  std::vector<int> cond_cards;
  std::vector<double> p;

  Distribution() = default;
  Distribution(std::vector<std::string> vars, std::vector<int> cards,
               std::vector<std::string> cond_vars = {}, std::vector<int> cond_cards = {});

  std::size_t table_size() const;  // cells per conditioning slice
  std::size_t slice_count() const;
  double& at(const std::vector<int>& var_vals, const std::vector<int>& cond_vals = {});
  double at(const std::vector<int>& var_vals, const std::vector<int>& cond_vals = {}) const;

  int card_of(const std::string& name) const;  // searches vars then cond_vars

  /// Asserts every conditioning slice sums to 1 within tol; throws otherwise.
  void check_normalized(double tol = 1e-9) const;
  /// Rescales each slice to sum exactly to 1. Zero-mass slices are left as-is.
  void normalize();

  /// Sums out every variable not in `keep` (conditioning axes unchanged).
  Distribution marginal(const VariableSet& keep) const;

  /// Moves `given` from the variable axes to new conditioning axes by
  /// dividing by the marginal over `given`. Slices where the marginal is zero
  /// are filled uniformly and reported through `zero_slices` when provided.
  Distribution condition(const VariableSet& given, std::size_t* zero_slices = nullptr) const;

  /// Restricts one conditioning axis to a fixed value, dropping that axis.
  Distribution fix_condition(const std::string& cond_var, int value) const;

  /// Reorders the variable axes to the given permutation of `vars`.
  Distribution reorder(const std::vector<std::string>& new_vars) const;
};

/// Iterates mixed-radix assignments: vals cycles through all combinations of
/// the given cardinalities. Returns false once exhausted.
class AssignmentIterator {
 public:
  explicit AssignmentIterator(const std::vector<int>& cards)
      : cards_(cards), vals_(cards.size(), 0), done_(cards.empty() ? false : false) {
    for (int c : cards)
      if (c <= 0) done_ = true;
  }
  const std::vector<int>& values() const { return vals_; }
  bool done() const { return done_; }
  void next() {
    for (int i = (int)vals_.size() - 1; i >= 0; i--) {
      if (++vals_[i] < cards_[i]) return;
      vals_[i] = 0;
    }
    done_ = true;
  }

 private:
  std::vector<int> cards_;
  std::vector<int> vals_;
  bool done_;
};

std::size_t flat_index(const std::vector<int>& cards, const std::vector<int>& vals);

}  // namespace modcausal
