#include "amr/ghost.hpp"

#include <algorithm>
#include <cstring>

#include "amr/meshiter.hpp"

namespace amr {

std::span<const std::int32_t> GhostIndex::mirrors_to(int rank) const {
  const auto b = mirror_proc_offsets.at(rank);
  const auto e = mirror_proc_offsets.at(rank + 1);
  return {mirror_proc_mirrors.data() + b, static_cast<std::size_t>(e - b)};
}

namespace {

template <int D>
struct GhostWire {
  Leaf<D> leaf;
  std::int32_t owner_index;
  std::int64_t global_index;
};

// True iff some descendant of (tree, q) touching face f of q lies in the
// curve range [begin, end).
template <int D>
bool face_touches_range(std::int32_t tree, const Quadrant<D>& q, int f, const SfcPos& begin, const SfcPos& end) {
  const auto first = sfc_first(tree, q);
  const auto last = sfc_last(tree, q);
  if (last < begin || !(first < end)) return false;
  if (!(first < begin) && last < end) return true;
  for (const auto& c : face_children(q, f))
    if (face_touches_range(tree, c, f, begin, end)) return true;
  return false;
}

}  // namespace

template <int D>
GhostLayers<D> build_ghost(const Forest<D>& forest, Comm& comm) {
  const int P = forest.num_ranks();
  const auto& conn = forest.connectivity();
  const auto& markers = forest.markers();
  GhostLayers<D> layers(P);

  comm.run([&](int rank) {
    const auto& ls = forest.leaves(rank);
    std::vector<std::vector<std::int32_t>> to(P);
    for (std::size_t i = 0; i < ls.size(); ++i) {
      for (int f = 0; f < kFaces<D>; ++f) {
        const auto nb = face_neighborhood(conn, ls[i], f);
        if (nb.boundary) continue;
        const int r0 = forest.owner(sfc_first(nb.tree, nb.neighbor));
        const int r1 = forest.owner(sfc_last(nb.tree, nb.neighbor));
        for (int r = r0; r <= r1; ++r) {
          if (r == rank || forest.num_local(r) == 0) continue;
          auto& list = to[r];
          if (!list.empty() && list.back() == static_cast<std::int32_t>(i)) continue;
          if (face_touches_range(nb.tree, nb.neighbor, nb.neighbor_face, markers[r], markers[r + 1])) {
            list.push_back(static_cast<std::int32_t>(i));
          }
        }
      }
    }
    auto& layer = layers[rank];
    layer.num_local = forest.num_local(rank);
    layer.mirror_proc_offsets.assign(P + 1, 0);
    for (int r = 0; r < P; ++r) {
      layer.mirror_proc_offsets[r + 1] = layer.mirror_proc_offsets[r] + static_cast<std::int32_t>(to[r].size());
      layer.mirror_proc_mirrors.insert(layer.mirror_proc_mirrors.end(), to[r].begin(), to[r].end());
      layer.mirrors.insert(layer.mirrors.end(), to[r].begin(), to[r].end());
      if (to[r].empty()) continue;
      std::vector<GhostWire<D>> wire;
      wire.reserve(to[r].size());
      for (auto i : to[r]) wire.push_back({ls[i], i, forest.offset(rank) + i});
      comm.send(rank, r, kTagGhostBuild, pack<GhostWire<D>>(std::span<const GhostWire<D>>(wire)));
    }
    std::sort(layer.mirrors.begin(), layer.mirrors.end());
    layer.mirrors.erase(std::unique(layer.mirrors.begin(), layer.mirrors.end()), layer.mirrors.end());
  });

  comm.run([&](int rank) {
    auto& layer = layers[rank];
    layer.proc_offsets.assign(P + 1, 0);
    for (const auto& msg : comm.receive(rank, kTagGhostBuild)) {
      for (const auto& w : unpack<GhostWire<D>>(msg.data)) {
        layer.ghosts.push_back({w.leaf, msg.source, w.owner_index, w.global_index});
      }
      layer.proc_offsets[msg.source + 1] = static_cast<std::int32_t>(layer.ghosts.size());
    }
    for (int q = 0; q < P; ++q) layer.proc_offsets[q + 1] = std::max(layer.proc_offsets[q + 1], layer.proc_offsets[q]);
    for (std::size_t g = 0; g < layer.ghosts.size(); ++g) {
      layer.by_global.emplace(layer.ghosts[g].global_index, static_cast<std::int32_t>(g));
    }
  });
  return layers;
}

std::vector<std::vector<std::byte>> exchange_records(const std::vector<const GhostIndex*>& layout,
                                                     const std::vector<std::vector<std::byte>>& payload,
                                                     std::size_t record_size, Comm& comm, int tag) {
  return exchange_records(layout, payload, std::vector<std::size_t>(layout.size(), record_size), comm, tag);
}

std::vector<std::vector<std::byte>> exchange_records(const std::vector<const GhostIndex*>& layout,
                                                     const std::vector<std::vector<std::byte>>& payload,
                                                     const std::vector<std::size_t>& record_size, Comm& comm,
                                                     int tag) {
  const int P = static_cast<int>(layout.size());
  if (static_cast<int>(payload.size()) != P || static_cast<int>(record_size.size()) != P) {
    throw Error("ghost exchange: rank count mismatch");
  }
  comm.run([&](int rank) {
    const auto& idx = *layout[rank];
    const auto rs = record_size[rank];
    if (payload[rank].size() != static_cast<std::size_t>(idx.num_local) * rs) {
      throw Error("ghost exchange: payload of rank " + std::to_string(rank) + " does not match the leaf count");
    }
    for (int q = 0; q < P; ++q) {
      const auto mirrors = idx.mirrors_to(q);
      if (mirrors.empty()) continue;
      std::vector<std::byte> buf(sizeof(std::uint64_t) + mirrors.size() * rs);
      const std::uint64_t header = rs;
      std::memcpy(buf.data(), &header, sizeof header);
      auto* out = buf.data() + sizeof header;
      for (auto i : mirrors) {
        std::memcpy(out, payload[rank].data() + static_cast<std::size_t>(i) * rs, rs);
        out += rs;
      }
      comm.send(rank, q, tag, std::move(buf));
    }
  });
  std::vector<std::vector<std::byte>> result(P);
  comm.run([&](int rank) {
    const auto& idx = *layout[rank];
    const auto rs = record_size[rank];
    auto& out = result[rank];
    out.assign(static_cast<std::size_t>(idx.num_ghosts()) * rs, std::byte{0});
    for (const auto& msg : comm.receive(rank, tag)) {
      std::uint64_t header = 0;
      if (msg.data.size() < sizeof header) throw Error("ghost exchange: truncated message");
      std::memcpy(&header, msg.data.data(), sizeof header);
      if (header != rs) {
        throw Error("ghost exchange: rank " + std::to_string(msg.source) + " sent records of " +
                    std::to_string(header) + " bytes, rank " + std::to_string(rank) + " expects " +
                    std::to_string(rs));
      }
      const auto count = static_cast<std::size_t>(idx.proc_offsets[msg.source + 1] - idx.proc_offsets[msg.source]);
      if (msg.data.size() != sizeof header + count * rs) throw Error("ghost exchange: record count mismatch");
      if (count) {
        std::memcpy(out.data() + static_cast<std::size_t>(idx.proc_offsets[msg.source]) * rs,
                    msg.data.data() + sizeof header, count * rs);
      }
    }
  });
  return result;
}

template GhostLayers<2> build_ghost(const Forest<2>&, Comm&);
template GhostLayers<3> build_ghost(const Forest<3>&, Comm&);

}  // namespace amr
