// 2:1 face balance: the marking-based ripple that runs before adaptation,
// a refinement-only reference balance, and the balance check.
#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "amr/forest.hpp"
#include "amr/ghost.hpp"
#include "amr/meshiter.hpp"

namespace amr {

template <int D>
struct BalanceViolation {
  int rank = 0;
  std::int32_t leaf = 0;  // local index of the finer leaf
  int face = 0;
  Leaf<D> fine;
  Leaf<D> coarse;
  int coarse_owner = 0;

  std::string describe() const;
};

/// Every face-adjacent leaf pair whose levels differ by two or more, each
/// reported once by the owner of the finer leaf.
template <int D>
std::vector<BalanceViolation<D>> check_balanced(const Forest<D>& forest, const GhostLayers<D>& ghosts, Comm& comm);

template <int D>
std::vector<BalanceViolation<D>> check_balanced(const Forest<D>& forest, Comm& comm) {
  return check_balanced(forest, build_ghost(forest, comm), comm);
}

struct BalanceOptions {
  int max_rounds = 3;
  /// Sweep leaves in descending instead of ascending curve order.
  bool reverse_order = false;
};

struct BalanceReport {
  int sweeps_used = 0;
  bool fell_back = false;
  std::int64_t face_visits = 0;
  std::int64_t local_passes = 0;
  std::int64_t changes = 0;
};

/// Rewrites `marking` so that one adapt() step yields a 2:1 balanced mesh
/// whenever the input mesh is balanced. Exchanges marks with the ghost
/// layer up to max_rounds times; fell_back reports that the marks did not
/// settle in that many rounds.
template <int D>
BalanceReport balanced_marking(const Forest<D>& forest, const GhostLayers<D>& ghosts,
                               const std::vector<IntersectionTable<D>>& tables, Marking& marking, Comm& comm,
                               BalanceOptions options = {});

struct MonolithicReport {
  int iterations = 0;
  std::int64_t face_visits = 0;
  std::int64_t refined = 0;
};

/// Refines until the forest is 2:1 face balanced, repeating a global
/// neighbor scan after every refinement pass.
template <int D>
MonolithicReport monolithic_balance(Forest<D>& forest, Comm& comm, AdaptDataHandle* handle = nullptr);

enum class BalanceStrategy { Ripple, Monolithic };

struct AdaptReport {
  BalanceReport ripple;
  MonolithicReport monolithic;
};

/// One balanced adaptation step: the ripple marking followed by adapt()
/// (falling back to the reference balance if the marks did not settle), or
/// adapt() of the raw marking followed by the reference balance.
template <int D>
AdaptReport adapt_balanced(Forest<D>& forest, Marking marking, Comm& comm, BalanceStrategy strategy,
                           AdaptDataHandle* handle = nullptr, BalanceOptions options = {});

}  // namespace amr
