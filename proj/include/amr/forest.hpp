// The distributed mesh: per-rank sorted leaf arrays over a connectivity,
// adaptation with refine > keep > coarsen precedence, and space-filling
// curve repartitioning.
#pragma once

#include <compare>
#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "amr/comm.hpp"
#include "amr/connectivity.hpp"
#include "amr/quadrant.hpp"

namespace amr {

/// Message tags used by the collectives of this library.
enum Tag : int {
  kTagMigrate = 1,
  kTagFamilyWindow = 2,
  kTagGhostBuild = 3,
  kTagGhostExchange = 4,
};

template <int D>
struct Leaf {
  std::int32_t tree = 0;
  Quadrant<D> quad;

  friend bool operator==(const Leaf&, const Leaf&) = default;
};

/// A position on the forest-wide space-filling curve at the finest level.
struct SfcPos {
  std::int32_t tree = 0;
  std::uint64_t key = 0;

  friend auto operator<=>(const SfcPos&, const SfcPos&) = default;
};

template <int D>
SfcPos sfc_first(std::int32_t tree, const Quadrant<D>& q) {
  return {tree, morton_key(q)};
}

template <int D>
SfcPos sfc_last(std::int32_t tree, const Quadrant<D>& q) {
  return {tree, morton_key_last(q)};
}

template <int D>
std::strong_ordering leaf_cmp(const Leaf<D>& a, const Leaf<D>& b) {
  if (a.tree != b.tree) return a.tree <=> b.tree;
  return morton_cmp(a.quad, b.quad);
}

template <int D>
bool leaf_less(const Leaf<D>& a, const Leaf<D>& b) {
  return leaf_cmp(a, b) < 0;
}

/// Per-rank adaptation flags in {-1, 0, +1}, index-aligned with the leaves.
using Marking = std::vector<std::vector<std::int8_t>>;

template <int D>
class Forest {
 public:
  /// Takes per-rank leaf arrays as given; call validate() to check them.
  Forest(std::shared_ptr<const Connectivity<D>> conn, std::vector<std::vector<Leaf<D>>> per_rank);

  /// Every tree refined to `level`, partitioned by the equal-count formula.
  static Forest uniform(std::shared_ptr<const Connectivity<D>> conn, int level, int ranks);

  /// Distributes a global sorted leaf array by the equal-count formula.
  static Forest from_global(std::shared_ptr<const Connectivity<D>> conn, const std::vector<Leaf<D>>& global,
                            int ranks);

  const Connectivity<D>& connectivity() const { return *conn_; }
  const std::shared_ptr<const Connectivity<D>>& connectivity_ptr() const { return conn_; }
  int num_ranks() const { return static_cast<int>(leaves_.size()); }
  const std::vector<Leaf<D>>& leaves(int rank) const { return leaves_.at(rank); }
  std::int64_t num_local(int rank) const { return static_cast<std::int64_t>(leaves_.at(rank).size()); }
  std::int64_t num_global() const { return offsets_.back(); }
  /// O_p; size num_ranks() + 1.
  const std::vector<std::int64_t>& offsets() const { return offsets_; }
  std::int64_t offset(int rank) const { return offsets_.at(rank); }

  /// First curve position of every rank (empty ranks repeat the next one);
  /// entry num_ranks() is the end of the forest.
  const std::vector<SfcPos>& markers() const { return markers_; }
  /// Rank owning the finest cell at `pos`.
  int owner(const SfcPos& pos) const;

  /// Concatenated global leaf array.
  std::vector<Leaf<D>> gather() const;

  /// Replaces the leaves of every rank and recomputes offsets and markers
  /// (recorded as one allgather when a Comm is supplied).
  void assign(std::vector<std::vector<Leaf<D>>> per_rank, Comm* comm = nullptr);

 private:
  void refresh();

  std::shared_ptr<const Connectivity<D>> conn_;
  std::vector<std::vector<Leaf<D>>> leaves_;
  std::vector<std::int64_t> offsets_;
  std::vector<SfcPos> markers_;
};

/// Checks every forest invariant; returns one line per violation.
template <int D>
std::vector<std::string> validate(const Forest<D>& forest);

struct AdaptEvent {
  enum Kind { Keep, Refine, Coarsen };
  Kind kind = Keep;
  int rank = 0;
  /// Rank-local old leaves [old_first, old_first + old_count) become new leaves
  /// [new_first, new_first + new_count); children are in Morton order.
  std::int64_t old_first = 0;
  int old_count = 1;
  std::int64_t new_first = 0;
  int new_count = 1;
};

/// Data transfer hook for adapt, called with parent/children pairs.
/// prepare() receives the new per-rank leaf counts before any event;
/// transfer() runs once per event in leaf order within a rank (different
/// ranks may call concurrently in threaded mode); finish() runs last.
class AdaptDataHandle {
 public:
  virtual ~AdaptDataHandle() = default;
  virtual void prepare(const std::vector<std::int64_t>& /*new_counts*/) {}
  virtual void transfer(const AdaptEvent& event) = 0;
  virtual void finish() {}
};

struct AdaptOptions {
  /// Reject markings whose result is not 2:1 face balanced.
  bool require_balanced = true;
};

/// One-level adaptation. Throws and leaves the forest untouched when the
/// marking is malformed or (with require_balanced) would break 2:1 balance.
template <int D>
void adapt(Forest<D>& forest, const Marking& marking, Comm& comm, AdaptDataHandle* handle = nullptr,
           AdaptOptions options = {});

/// Equal-count partition offsets: O_p = floor(p N / P).
std::vector<std::int64_t> partition_offsets(std::int64_t n, int ranks);

struct Transfer {
  int source;
  int dest;
  std::int64_t first;  // global index of the first moved leaf
  std::int64_t count;
};

struct MigrationPlan {
  std::vector<std::int64_t> old_offsets;
  std::vector<std::int64_t> new_offsets;

  /// Every (source, dest) range move, including ranges kept in place.
  std::vector<Transfer> transfers() const;
};

struct PartitionOptions {
  bool fix_families = true;
};

/// Repartitions by leaf count, or by per-leaf weights when given, then
/// moves split sibling families to the rank owning their first sibling.
template <int D>
MigrationPlan partition(Forest<D>& forest, Comm& comm, const std::vector<std::vector<std::int64_t>>* weights = nullptr,
                        PartitionOptions options = {});

/// Family correction alone, applied to the current partition.
template <int D>
MigrationPlan fix_family_splits(Forest<D>& forest, Comm& comm);

/// Moves per-leaf data along a migration plan.
template <class T>
std::vector<std::vector<T>> migrate(const MigrationPlan& plan, const std::vector<std::vector<T>>& data, Comm& comm,
                                    int tag = kTagMigrate) {
  const int P = static_cast<int>(plan.old_offsets.size()) - 1;
  const auto moves = plan.transfers();
  comm.run([&](int rank) {
    for (const auto& t : moves) {
      if (t.source != rank || t.dest == rank) continue;
      const auto begin = t.first - plan.old_offsets[rank];
      comm.send(rank, t.dest, tag,
                pack<T>(std::span<const T>(data[rank].data() + begin, static_cast<std::size_t>(t.count))));
    }
  });
  std::vector<std::vector<T>> out(P);
  comm.run([&](int rank) {
    auto inbox = comm.receive(rank, tag);
    auto& dst = out[rank];
    dst.reserve(static_cast<std::size_t>(plan.new_offsets[rank + 1] - plan.new_offsets[rank]));
    std::size_t next_msg = 0;
    for (const auto& t : moves) {
      if (t.dest != rank) continue;
      if (t.source == rank) {
        const auto begin = t.first - plan.old_offsets[rank];
        dst.insert(dst.end(), data[rank].begin() + begin, data[rank].begin() + begin + t.count);
      } else {
        auto part = unpack<T>(inbox.at(next_msg++).data);
        dst.insert(dst.end(), part.begin(), part.end());
      }
    }
  });
  return out;
}

}  // namespace amr
