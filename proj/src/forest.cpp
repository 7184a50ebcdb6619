#include "amr/forest.hpp"

#include <algorithm>
#include <numeric>
#include <sstream>

#include "amr/balance.hpp"
#include "amr/ghost.hpp"

namespace amr {

namespace {

template <int D>
std::string describe(const Leaf<D>& l) {
  std::ostringstream os;
  os << "tree " << l.tree << " level " << int(l.quad.level) << " (";
  for (int a = 0; a < D; ++a) os << (a ? "," : "") << l.quad.x[a];
  os << ")";
  return os.str();
}

int owner_of_index(const std::vector<std::int64_t>& offsets, std::int64_t i) {
  auto it = std::upper_bound(offsets.begin(), offsets.end(), i);
  return static_cast<int>(it - offsets.begin()) - 1;
}

}  // namespace

template <int D>
Forest<D>::Forest(std::shared_ptr<const Connectivity<D>> conn, std::vector<std::vector<Leaf<D>>> per_rank)
    : conn_(std::move(conn)), leaves_(std::move(per_rank)) {
  if (!conn_) throw Error("Forest: null connectivity");
  if (leaves_.empty()) throw Error("Forest: need at least one rank");
  refresh();
}

template <int D>
void Forest<D>::refresh() {
  const int P = num_ranks();
  offsets_.assign(P + 1, 0);
  for (int p = 0; p < P; ++p) offsets_[p + 1] = offsets_[p] + static_cast<std::int64_t>(leaves_[p].size());
  markers_.assign(P + 1, SfcPos{conn_->num_trees(), 0});
  for (int p = P - 1; p >= 0; --p) {
    markers_[p] = leaves_[p].empty() ? markers_[p + 1] : sfc_first(leaves_[p].front().tree, leaves_[p].front().quad);
  }
}

template <int D>
int Forest<D>::owner(const SfcPos& pos) const {
  const int P = num_ranks();
  auto it = std::upper_bound(markers_.begin(), markers_.begin() + P, pos);
  int p = static_cast<int>(it - markers_.begin()) - 1;
  return std::clamp(p, 0, P - 1);
}

template <int D>
std::vector<Leaf<D>> Forest<D>::gather() const {
  std::vector<Leaf<D>> out;
  out.reserve(static_cast<std::size_t>(num_global()));
  for (const auto& r : leaves_) out.insert(out.end(), r.begin(), r.end());
  return out;
}

template <int D>
void Forest<D>::assign(std::vector<std::vector<Leaf<D>>> per_rank, Comm* comm) {
  if (per_rank.size() != leaves_.size()) throw Error("Forest::assign: rank count changed");
  leaves_ = std::move(per_rank);
  refresh();
  if (comm) comm->record_collective("allgather");
}

template <int D>
Forest<D> Forest<D>::uniform(std::shared_ptr<const Connectivity<D>> conn, int level, int ranks) {
  if (level < 0 || level > kMaxLevel<D>) throw Error("Forest::uniform: level out of range");
  if (ranks <= 0) throw Error("Forest::uniform: rank count must be positive");
  const std::int64_t per_tree = std::int64_t{1} << (D * level);
  const auto offsets = partition_offsets(per_tree * conn->num_trees(), ranks);
  std::vector<std::vector<Leaf<D>>> per_rank(ranks);
  for (int p = 0; p < ranks; ++p) {
    per_rank[p].reserve(static_cast<std::size_t>(offsets[p + 1] - offsets[p]));
    for (auto g = offsets[p]; g < offsets[p + 1]; ++g) {
      per_rank[p].push_back({static_cast<std::int32_t>(g / per_tree),
                             quadrant_from_linear_id<D>(static_cast<std::uint64_t>(g % per_tree), level)});
    }
  }
  return Forest(std::move(conn), std::move(per_rank));
}

template <int D>
Forest<D> Forest<D>::from_global(std::shared_ptr<const Connectivity<D>> conn, const std::vector<Leaf<D>>& global,
                                 int ranks) {
  if (ranks <= 0) throw Error("Forest::from_global: rank count must be positive");
  const auto offsets = partition_offsets(static_cast<std::int64_t>(global.size()), ranks);
  std::vector<std::vector<Leaf<D>>> per_rank(ranks);
  for (int p = 0; p < ranks; ++p) per_rank[p].assign(global.begin() + offsets[p], global.begin() + offsets[p + 1]);
  return Forest(std::move(conn), std::move(per_rank));
}

template <int D>
std::vector<std::string> validate(const Forest<D>& forest) {
  std::vector<std::string> out;
  const int P = forest.num_ranks();
  const int T = forest.connectivity().num_trees();
  const auto& off = forest.offsets();
  if (off.size() != static_cast<std::size_t>(P + 1) || off[0] != 0) out.push_back("offsets: malformed");
  std::vector<std::uint64_t> volume(T, 0);
  const Leaf<D>* prev = nullptr;
  int prev_rank = -1;
  std::int64_t prev_index = -1;
  for (int p = 0; p < P; ++p) {
    const auto& ls = forest.leaves(p);
    if (off[p + 1] - off[p] != static_cast<std::int64_t>(ls.size())) {
      out.push_back("rank " + std::to_string(p) + ": offsets disagree with the leaf count");
    }
    for (std::size_t i = 0; i < ls.size(); ++i) {
      const auto& l = ls[i];
      const std::string where = "rank " + std::to_string(p) + " leaf " + std::to_string(i) + " (" + describe(l) + ")";
      if (l.tree < 0 || l.tree >= T) {
        out.push_back(where + ": tree out of range");
        continue;
      }
      if (!is_valid(l.quad)) {
        out.push_back(where + ": invalid quadrant");
        continue;
      }
      volume[l.tree] += finest_cells<D>(l.quad.level);
      if (prev) {
        const auto a = sfc_last(prev->tree, prev->quad);
        const auto b = sfc_first(l.tree, l.quad);
        if (!leaf_less(*prev, l)) {
          out.push_back(where + ": out of order after rank " + std::to_string(prev_rank) + " leaf " +
                        std::to_string(prev_index));
        } else if (!(a < b)) {
          out.push_back(where + ": overlaps rank " + std::to_string(prev_rank) + " leaf " +
                        std::to_string(prev_index));
        }
      }
      prev = &l;
      prev_rank = p;
      prev_index = static_cast<std::int64_t>(i);
    }
  }
  for (int t = 0; t < T; ++t) {
    if (volume[t] != finest_cells<D>(0)) {
      out.push_back("tree " + std::to_string(t) + ": leaves cover " + std::to_string(volume[t]) + " of " +
                    std::to_string(finest_cells<D>(0)) + " finest cells");
    }
  }
  return out;
}

template <int D>
void adapt(Forest<D>& forest, const Marking& marking, Comm& comm, AdaptDataHandle* handle, AdaptOptions options) {
  const int P = forest.num_ranks();
  if (static_cast<int>(marking.size()) != P) throw Error("adapt: marking has the wrong rank count");
  for (int p = 0; p < P; ++p) {
    if (static_cast<std::int64_t>(marking[p].size()) != forest.num_local(p)) {
      throw Error("adapt: marking of rank " + std::to_string(p) + " has the wrong length");
    }
  }
  constexpr int K = kChildren<D>;
  std::vector<std::vector<Leaf<D>>> next(P);
  std::vector<std::vector<AdaptEvent>> events(P);
  comm.run([&](int rank) {
    const auto& ls = forest.leaves(rank);
    const auto& m = marking[rank];
    auto& out = next[rank];
    auto& ev = events[rank];
    const auto n = static_cast<std::int64_t>(ls.size());
    for (std::int64_t i = 0; i < n;) {
      const auto mark = m[i];
      if (mark < -1 || mark > 1) throw Error("adapt: mark out of range at rank " + std::to_string(rank));
      const auto& l = ls[i];
      if (mark == 1) {
        if (l.quad.level >= kMaxLevel<D>) throw Error("adapt: cannot refine beyond the maximum level");
        ev.push_back({AdaptEvent::Refine, rank, i, 1, static_cast<std::int64_t>(out.size()), K});
        for (const auto& c : children(l.quad)) out.push_back({l.tree, c});
        ++i;
        continue;
      }
      if (mark == -1 && i + K <= n && l.quad.level > 0 && child_id(l.quad) == 0) {
        bool family = true;
        std::array<Quadrant<D>, K> qs;
        for (int k = 0; k < K && family; ++k) {
          family = ls[i + k].tree == l.tree && m[i + k] == -1;
          qs[k] = ls[i + k].quad;
        }
        if (family && is_family<D>(std::span<const Quadrant<D>>(qs))) {
          ev.push_back({AdaptEvent::Coarsen, rank, i, K, static_cast<std::int64_t>(out.size()), 1});
          out.push_back({l.tree, parent(l.quad)});
          i += K;
          continue;
        }
      }
      ev.push_back({AdaptEvent::Keep, rank, i, 1, static_cast<std::int64_t>(out.size()), 1});
      out.push_back(l);
      ++i;
    }
  });
  if (options.require_balanced) {
    Forest<D> candidate(forest.connectivity_ptr(), next);
    auto bad = check_balanced(candidate, comm);
    if (!bad.empty()) {
      throw Error("adapt: result is not 2:1 balanced (" + std::to_string(bad.size()) +
                  " violations; first: " + bad.front().describe() + ")");
    }
  }
  if (handle) {
    std::vector<std::int64_t> counts(P);
    for (int p = 0; p < P; ++p) counts[p] = static_cast<std::int64_t>(next[p].size());
    handle->prepare(counts);
    comm.run([&](int rank) {
      for (const auto& e : events[rank]) handle->transfer(e);
    });
    handle->finish();
  }
  forest.assign(std::move(next), &comm);
}

std::vector<std::int64_t> partition_offsets(std::int64_t n, int ranks) {
  if (ranks <= 0) throw Error("partition_offsets: rank count must be positive");
  std::vector<std::int64_t> o(ranks + 1);
  for (int p = 0; p <= ranks; ++p) o[p] = static_cast<std::int64_t>(static_cast<__int128>(p) * n / ranks);
  return o;
}

std::vector<Transfer> MigrationPlan::transfers() const {
  std::vector<Transfer> out;
  const int P = static_cast<int>(old_offsets.size()) - 1;
  for (int s = 0; s < P; ++s) {
    for (int d = 0; d < P; ++d) {
      const auto lo = std::max(old_offsets[s], new_offsets[d]);
      const auto hi = std::min(old_offsets[s + 1], new_offsets[d + 1]);
      if (lo < hi) out.push_back({s, d, lo, hi - lo});
    }
  }
  return out;
}

namespace {

template <int D>
struct WindowEntry {
  std::int64_t index;
  Leaf<D> leaf;
};

// Moves every target boundary that splits a sibling family to just past
// the family, so the rank holding the first sibling holds all of them.
template <int D>
std::vector<std::int64_t> family_corrected(const Forest<D>& forest, Comm& comm, std::vector<std::int64_t> target) {
  constexpr int K = kChildren<D>;
  const int P = forest.num_ranks();
  const auto N = forest.num_global();
  const auto& old = forest.offsets();
  // Boundary q is decided by the current owner of leaf target[q].
  auto decider = [&](int q) { return owner_of_index(old, target[q]); };
  auto active = [&](int q) { return target[q] > 0 && target[q] < N; };

  comm.run([&](int rank) {
    std::vector<std::vector<WindowEntry<D>>> outgoing(P);
    for (int q = 1; q < P; ++q) {
      if (!active(q)) continue;
      const int d = decider(q);
      if (d == rank) continue;
      const auto lo = std::max(target[q] - (K - 1), old[rank]);
      const auto hi = std::min(target[q] + (K - 1), old[rank + 1]);
      for (auto g = lo; g < hi; ++g) outgoing[d].push_back({g, forest.leaves(rank)[g - old[rank]]});
    }
    for (int d = 0; d < P; ++d) {
      if (outgoing[d].empty()) continue;
      // Ranges of adjacent boundaries can overlap; keep each index once.
      auto& v = outgoing[d];
      std::sort(v.begin(), v.end(), [](const auto& a, const auto& b) { return a.index < b.index; });
      v.erase(std::unique(v.begin(), v.end(), [](const auto& a, const auto& b) { return a.index == b.index; }),
              v.end());
      comm.send(rank, d, kTagFamilyWindow, pack<WindowEntry<D>>(std::span<const WindowEntry<D>>(v)));
    }
  });

  std::vector<std::int64_t> corrected = target;
  std::vector<std::vector<std::pair<int, std::int64_t>>> decided(P);
  comm.run([&](int rank) {
    std::vector<WindowEntry<D>> known;
    for (const auto& msg : comm.receive(rank, kTagFamilyWindow)) {
      auto part = unpack<WindowEntry<D>>(msg.data);
      known.insert(known.end(), part.begin(), part.end());
    }
    auto lookup = [&](std::int64_t g) -> const Leaf<D>* {
      if (g >= old[rank] && g < old[rank + 1]) return &forest.leaves(rank)[g - old[rank]];
      for (const auto& e : known)
        if (e.index == g) return &e.leaf;
      return nullptr;
    };
    for (int q = 1; q < P; ++q) {
      if (!active(q) || decider(q) != rank) continue;
      const auto b = target[q];
      for (auto s = std::max<std::int64_t>(0, b - K + 1); s < b; ++s) {
        if (s + K > N) break;
        std::array<Quadrant<D>, K> qs;
        bool ok = true;
        const Leaf<D>* first = lookup(s);
        for (int k = 0; k < K && ok; ++k) {
          const Leaf<D>* l = lookup(s + k);
          ok = l && first && l->tree == first->tree;
          if (ok) qs[k] = l->quad;
        }
        if (ok && is_family<D>(std::span<const Quadrant<D>>(qs))) {
          decided[rank].push_back({q, s + K});
          break;
        }
      }
    }
  });
  for (const auto& per : comm.allgather(decided))
    for (const auto& [q, v] : per) corrected[q] = v;
  for (int q = 1; q <= P; ++q) corrected[q] = std::min(N, std::max(corrected[q], corrected[q - 1]));
  corrected[P] = N;
  return corrected;
}

template <int D>
MigrationPlan apply_plan(Forest<D>& forest, Comm& comm, std::vector<std::int64_t> new_offsets) {
  MigrationPlan plan{forest.offsets(), std::move(new_offsets)};
  std::vector<std::vector<Leaf<D>>> current(forest.num_ranks());
  for (int p = 0; p < forest.num_ranks(); ++p) current[p] = forest.leaves(p);
  auto moved = migrate(plan, current, comm);
  forest.assign(std::move(moved), &comm);
  return plan;
}

}  // namespace

template <int D>
MigrationPlan partition(Forest<D>& forest, Comm& comm, const std::vector<std::vector<std::int64_t>>* weights,
                        PartitionOptions options) {
  const int P = forest.num_ranks();
  const auto N = forest.num_global();
  std::vector<std::int64_t> target;
  if (weights) {
    if (static_cast<int>(weights->size()) != P) throw Error("partition: weights have the wrong rank count");
    std::vector<std::int64_t> totals(P, 0);
    comm.run([&](int rank) {
      const auto& w = (*weights)[rank];
      if (static_cast<std::int64_t>(w.size()) != forest.num_local(rank)) {
        throw Error("partition: weights of rank " + std::to_string(rank) + " have the wrong length");
      }
      for (auto x : w) {
        if (x < 0) throw Error("partition: negative weight");
        totals[rank] += x;
      }
    });
    const auto& all = comm.allgather(totals);
    const std::int64_t W = std::accumulate(all.begin(), all.end(), std::int64_t{0});
    if (W > 0) {
      std::vector<std::vector<std::int64_t>> counts(P, std::vector<std::int64_t>(P, 0));
      comm.run([&](int rank) {
        std::int64_t before = 0;
        for (int p = 0; p < rank; ++p) before += all[p];
        for (auto w : (*weights)[rank]) {
          const __int128 num = static_cast<__int128>(P) * (2 * static_cast<__int128>(before) + w);
          const auto dest = static_cast<int>(std::min<__int128>(P - 1, num / (2 * static_cast<__int128>(W))));
          ++counts[rank][dest];
          before += w;
        }
      });
      auto sum = comm.allreduce(counts, [](std::vector<std::int64_t> a, const std::vector<std::int64_t>& b) {
        for (std::size_t i = 0; i < a.size(); ++i) a[i] += b[i];
        return a;
      });
      target.assign(P + 1, 0);
      for (int p = 0; p < P; ++p) target[p + 1] = target[p] + sum[p];
    }
  }
  if (target.empty()) target = partition_offsets(N, P);
  if (options.fix_families) target = family_corrected(forest, comm, std::move(target));
  return apply_plan(forest, comm, std::move(target));
}

template <int D>
MigrationPlan fix_family_splits(Forest<D>& forest, Comm& comm) {
  return apply_plan(forest, comm, family_corrected(forest, comm, forest.offsets()));
}

#define AMR_INSTANTIATE(D)                                                                                    \
  template class Forest<D>;                                                                                   \
  template std::vector<std::string> validate(const Forest<D>&);                                               \
  template void adapt(Forest<D>&, const Marking&, Comm&, AdaptDataHandle*, AdaptOptions);                    \
  template MigrationPlan partition(Forest<D>&, Comm&, const std::vector<std::vector<std::int64_t>>*,          \
                                   PartitionOptions);                                                         \
  template MigrationPlan fix_family_splits(Forest<D>&, Comm&);

AMR_INSTANTIATE(2)
AMR_INSTANTIATE(3)

}  // namespace amr
