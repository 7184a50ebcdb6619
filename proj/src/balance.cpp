#include "amr/balance.hpp"

#include <algorithm>
#include <sstream>

namespace amr {

template <int D>
std::string BalanceViolation<D>::describe() const {
  std::ostringstream os;
  auto put = [&](const Leaf<D>& l) {
    os << "tree " << l.tree << " level " << int(l.quad.level) << " (";
    for (int a = 0; a < D; ++a) os << (a ? "," : "") << l.quad.x[a];
    os << ")";
  };
  os << "rank " << rank << " leaf " << leaf << " face " << face << ": ";
  put(fine);
  os << " touches ";
  put(coarse);
  os << " on rank " << coarse_owner;
  return os.str();
}

template <int D>
std::vector<BalanceViolation<D>> check_balanced(const Forest<D>& forest, const GhostLayers<D>& ghosts, Comm& comm) {
  using Rel = typename LeafLocator<D>::Relation;
  const int P = forest.num_ranks();
  std::vector<std::vector<BalanceViolation<D>>> found(P);
  comm.run([&](int rank) {
    const LeafLocator<D> loc(forest, ghosts[rank], rank);
    const auto& ls = forest.leaves(rank);
    for (std::int32_t i = 0; i < static_cast<std::int32_t>(ls.size()); ++i) {
      for (int f = 0; f < kFaces<D>; ++f) {
        const auto nb = face_neighborhood(forest.connectivity(), ls[i], f);
        if (nb.boundary) continue;
        const auto m = loc.locate(nb.tree, nb.neighbor);
        if (m.relation != Rel::Coarser) continue;
        const auto& c = loc.leaf(m.index);
        if (ls[i].quad.level - c.quad.level < 2) continue;
        const int owner = loc.is_ghost(m.index) ? ghosts[rank].ghosts[m.index - loc.num_local()].owner : rank;
        found[rank].push_back({rank, i, f, ls[i], c, owner});
      }
    }
  });
  std::vector<BalanceViolation<D>> out;
  for (const auto& v : comm.allgather(found)) out.insert(out.end(), v.begin(), v.end());
  return out;
}

template <int D>
BalanceReport balanced_marking(const Forest<D>& forest, const GhostLayers<D>& ghosts,
                               const std::vector<IntersectionTable<D>>& tables, Marking& marking, Comm& comm,
                               BalanceOptions options) {
  const int P = forest.num_ranks();
  if (static_cast<int>(marking.size()) != P) throw Error("balanced_marking: marking has the wrong rank count");
  BalanceReport report;
  std::vector<std::vector<std::int8_t>> levels(P);
  std::vector<std::vector<std::vector<std::int32_t>>> ghost_adj(P);
  std::vector<std::vector<std::int8_t>> ghost_view(P);
  comm.run([&](int rank) {
    const auto n = forest.num_local(rank);
    if (static_cast<std::int64_t>(marking[rank].size()) != n) {
      throw Error("balanced_marking: marking of rank " + std::to_string(rank) + " has the wrong length");
    }
    auto& lv = levels[rank];
    for (const auto& l : forest.leaves(rank)) lv.push_back(l.quad.level);
    for (const auto& g : ghosts[rank].ghosts) lv.push_back(g.leaf.quad.level);
    auto& adj = ghost_adj[rank];
    adj.resize(ghosts[rank].ghosts.size());
    for (std::int32_t e = 0; e < static_cast<std::int32_t>(n); ++e) {
      for (int f = 0; f < kFaces<D>; ++f) {
        for (const auto& is : tables[rank][e].face(f)) {
          if (is.neighbor >= n) {
            auto& a = adj[is.neighbor - n];
            if (a.empty() || a.back() != e) a.push_back(e);
          }
        }
      }
    }
    ghost_view[rank].assign(ghosts[rank].ghosts.size(), 0);
  });

  std::vector<std::int64_t> visits(P, 0), passes(P, 0), changes(P, 0);
  for (int round = 0; round < options.max_rounds; ++round) {
    report.sweeps_used = round + 1;
    const auto incoming = ghost_exchange(ghosts, marking, comm);
    std::vector<int> settled(P, 1);
    comm.run([&](int rank) {
      const auto n = static_cast<std::int32_t>(forest.num_local(rank));
      const auto& table = tables[rank];
      const auto& lv = levels[rank];
      const auto& adj = ghost_adj[rank];
      std::vector<std::int8_t> m = marking[rank];
      m.insert(m.end(), incoming[rank].begin(), incoming[rank].end());

      std::vector<char> queued(n, 0);
      std::vector<std::int32_t> work;
      auto push = [&](std::int32_t e) {
        if (!queued[e]) {
          queued[e] = 1;
          work.push_back(e);
        }
      };
      auto touch = [&](std::int32_t x) {
        if (x < n) {
          push(x);
          for (int f = 0; f < kFaces<D>; ++f)
            for (const auto& is : table[x].face(f))
              if (is.neighbor >= 0 && is.neighbor < n) push(is.neighbor);
        } else {
          for (auto e : adj[x - n]) push(e);
        }
      };
      if (round == 0) {
        for (std::int32_t e = 0; e < n; ++e)
          if (m[e] != 0) push(e);
        for (std::size_t g = 0; g < adj.size(); ++g)
          if (m[n + g] == 1)
            for (auto e : adj[g]) push(e);
      } else {
        for (std::size_t g = 0; g < adj.size(); ++g)
          if (m[n + g] != ghost_view[rank][g])
            for (auto e : adj[g]) push(e);
      }

      bool changed = false;
      auto set = [&](std::int32_t x, std::int8_t v) {
        if (m[x] == v) return;
        m[x] = v;
        changed = true;
        ++changes[rank];
        touch(x);
      };
      while (!work.empty()) {
        std::vector<std::int32_t> pass;
        pass.swap(work);
        if (options.reverse_order) {
          std::sort(pass.rbegin(), pass.rend());
        } else {
          std::sort(pass.begin(), pass.end());
        }
        for (auto e : pass) queued[e] = 0;
        ++passes[rank];
        for (auto e : pass) {
          const auto le = lv[e];
          for (int f = 0; f < kFaces<D>; ++f) {
            for (const auto& is : table[e].face(f)) {
              ++visits[rank];
              const auto k = is.neighbor;
              if (k < 0) continue;
              const auto lk = lv[k];
              if (m[e] == 1) {
                if (lk < le && m[k] < 1) {
                  set(k, 1);
                } else if (lk == le && m[k] < 0) {
                  set(k, 0);
                }
              } else if (m[e] == 0) {
                if (lk > le && m[k] == 1) set(e, 1);
              } else {
                if (lk > le) {
                  set(e, m[k] > 0 ? 1 : 0);
                } else if (lk == le && m[k] > 0) {
                  set(e, 0);
                }
              }
            }
          }
        }
      }
      std::copy(m.begin(), m.begin() + n, marking[rank].begin());
      ghost_view[rank].assign(m.begin() + n, m.end());
      settled[rank] = changed ? 0 : 1;
    });
    if (comm.allreduce(settled, [](int a, int b) { return std::min(a, b); }) == 1) {
      for (int p = 0; p < P; ++p) {
        report.face_visits += visits[p];
        report.local_passes += passes[p];
        report.changes += changes[p];
      }
      return report;
    }
  }
  report.fell_back = true;
  for (int p = 0; p < P; ++p) {
    report.face_visits += visits[p];
    report.local_passes += passes[p];
    report.changes += changes[p];
  }
  return report;
}

template <int D>
MonolithicReport monolithic_balance(Forest<D>& forest, Comm& comm, AdaptDataHandle* handle) {
  using Rel = typename LeafLocator<D>::Relation;
  MonolithicReport report;
  const int P = forest.num_ranks();
  while (true) {
    const auto layers = build_ghost(forest, comm);
    Marking marking(P);
    std::vector<std::int64_t> visits(P, 0), marked(P, 0);
    comm.run([&](int rank) {
      const LeafLocator<D> loc(forest, layers[rank], rank);
      const auto& ls = forest.leaves(rank);
      marking[rank].assign(ls.size(), 0);
      std::vector<std::int32_t> inside;
      for (std::size_t i = 0; i < ls.size(); ++i) {
        for (int f = 0; f < kFaces<D>; ++f) {
          const auto nb = face_neighborhood(forest.connectivity(), ls[i], f);
          if (nb.boundary) continue;
          const auto m = loc.locate(nb.tree, nb.neighbor);
          if (m.relation != Rel::Finer) {
            ++visits[rank];
            continue;
          }
          inside.clear();
          loc.leaves_touching(nb.tree, nb.neighbor, nb.neighbor_face, inside);
          visits[rank] += static_cast<std::int64_t>(inside.size());
          for (auto k : inside) {
            if (loc.leaf(k).quad.level >= ls[i].quad.level + 2) {
              marking[rank][i] = 1;
              break;
            }
          }
        }
        marked[rank] += marking[rank][i];
      }
    });
    for (auto v : visits) report.face_visits += v;
    const auto total = comm.allreduce(marked, [](std::int64_t a, std::int64_t b) { return a + b; });
    if (total == 0) break;
    adapt(forest, marking, comm, handle, AdaptOptions{false});
    report.refined += total;
    ++report.iterations;
  }
  return report;
}

template <int D>
AdaptReport adapt_balanced(Forest<D>& forest, Marking marking, Comm& comm, BalanceStrategy strategy,
                           AdaptDataHandle* handle, BalanceOptions options) {
  AdaptReport report;
  if (strategy == BalanceStrategy::Ripple) {
    const auto layers = build_ghost(forest, comm);
    std::vector<IntersectionTable<D>> tables(forest.num_ranks());
    comm.run([&](int rank) { tables[rank] = build_intersections(forest, layers[rank], rank); });
    report.ripple = balanced_marking(forest, layers, tables, marking, comm, options);
    adapt(forest, marking, comm, handle, AdaptOptions{false});
    if (report.ripple.fell_back) report.monolithic = monolithic_balance(forest, comm, handle);
  } else {
    adapt(forest, marking, comm, handle, AdaptOptions{false});
    report.monolithic = monolithic_balance(forest, comm, handle);
  }
  return report;
}

#define AMR_INSTANTIATE(D)                                                                                    \
  template struct BalanceViolation<D>;                                                                        \
  template std::vector<BalanceViolation<D>> check_balanced(const Forest<D>&, const GhostLayers<D>&, Comm&);   \
  template BalanceReport balanced_marking(const Forest<D>&, const GhostLayers<D>&,                            \
                                          const std::vector<IntersectionTable<D>>&, Marking&, Comm&,          \
                                          BalanceOptions);                                                    \
  template MonolithicReport monolithic_balance(Forest<D>&, Comm&, AdaptDataHandle*);                          \
  template AdaptReport adapt_balanced(Forest<D>&, Marking, Comm&, BalanceStrategy, AdaptDataHandle*,          \
                                      BalanceOptions);

AMR_INSTANTIATE(2)
AMR_INSTANTIATE(3)

}  // namespace amr
