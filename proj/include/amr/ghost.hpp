// One layer of face-adjacent remote leaves per rank, and the exchange of
// per-leaf payload from mirrors (local leaves seen by other ranks) to ghosts.
#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <unordered_map>
#include <vector>

#include "amr/comm.hpp"
#include "amr/forest.hpp"

namespace amr {

/// Rank-level layout shared by every dimension.
struct GhostIndex {
  /// Ghosts received from rank q are [proc_offsets[q], proc_offsets[q + 1]).
  std::vector<std::int32_t> proc_offsets;
  /// Local indices of all mirrors, ascending and unique.
  std::vector<std::int32_t> mirrors;
  /// Mirrors sent to rank q are mirror_proc_mirrors[mirror_proc_offsets[q] ..
  /// mirror_proc_offsets[q + 1]), given as local leaf indices, ascending.
  std::vector<std::int32_t> mirror_proc_offsets;
  std::vector<std::int32_t> mirror_proc_mirrors;
  std::int64_t num_local = 0;

  std::int32_t num_ghosts() const { return proc_offsets.empty() ? 0 : proc_offsets.back(); }
  std::span<const std::int32_t> mirrors_to(int rank) const;
};

template <int D>
struct GhostLeaf {
  Leaf<D> leaf;
  std::int32_t owner = 0;
  std::int32_t owner_index = 0;  // local index on the owner
  std::int64_t global_index = 0;
};

template <int D>
struct GhostLayer : GhostIndex {
  /// Sorted by owner rank, then tree, then Morton order.
  std::vector<GhostLeaf<D>> ghosts;
  std::unordered_map<std::int64_t, std::int32_t> by_global;

  std::optional<std::int32_t> find(std::int64_t global_index) const {
    auto it = by_global.find(global_index);
    if (it == by_global.end()) return std::nullopt;
    return it->second;
  }
};

template <int D>
using GhostLayers = std::vector<GhostLayer<D>>;

/// Builds the face ghost layer of every rank with one message per adjacent
/// rank pair.
template <int D>
GhostLayers<D> build_ghost(const Forest<D>& forest, Comm& comm);

/// Byte-level exchange: payload[p] holds num_local records of record_size
/// bytes; returns num_ghosts records per rank. Throws when ranks disagree on
/// the record size.
std::vector<std::vector<std::byte>> exchange_records(const std::vector<const GhostIndex*>& layout,
                                                     const std::vector<std::vector<std::byte>>& payload,
                                                     std::size_t record_size, Comm& comm,
                                                     int tag = kTagGhostExchange);

/// Same as exchange_records with a per-rank record size, for testing the
/// mismatch check.
std::vector<std::vector<std::byte>> exchange_records(const std::vector<const GhostIndex*>& layout,
                                                     const std::vector<std::vector<std::byte>>& payload,
                                                     const std::vector<std::size_t>& record_size, Comm& comm,
                                                     int tag = kTagGhostExchange);

template <int D, class T>
std::vector<std::vector<T>> ghost_exchange(const GhostLayers<D>& layers, const std::vector<std::vector<T>>& data,
                                           Comm& comm) {
  std::vector<const GhostIndex*> layout;
  std::vector<std::vector<std::byte>> bytes;
  for (std::size_t p = 0; p < layers.size(); ++p) {
    layout.push_back(&layers[p]);
    bytes.push_back(pack<T>(std::span<const T>(data.at(p))));
  }
  auto raw = exchange_records(layout, bytes, sizeof(T), comm);
  std::vector<std::vector<T>> out;
  out.reserve(raw.size());
  for (auto& r : raw) out.push_back(unpack<T>(r));
  return out;
}

}  // namespace amr
