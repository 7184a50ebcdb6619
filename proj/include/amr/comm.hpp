// In-process rank simulation: a superstep scheduler over per-rank mailboxes
// with a recordable transcript of point-to-point messages and collectives.
//
// A collective operation is written as a sequence of phases. Comm::run()
// executes one phase for every rank, either round-robin on the calling
// thread or on one thread per rank, and returns once all ranks finished.
// Messages posted during a phase become visible to receive() in later
// phases, ordered by source rank and then by posting order, so both
// execution modes deliver identical inboxes.
#pragma once

#include <cstddef>
#include <cstring>
#include <functional>
#include <map>
#include <mutex>
#include <span>
#include <string>
#include <tuple>
#include <type_traits>
#include <vector>

namespace amr {

enum class ExecMode { Serial, Threaded };

struct Message {
  int source = 0;
  int dest = 0;
  int tag = 0;
  std::vector<std::byte> data;
};

struct Transcript {
  std::int64_t messages = 0;
  std::int64_t bytes = 0;
  std::int64_t collectives = 0;
  /// Point-to-point message count per (source, dest, tag).
  std::map<std::tuple<int, int, int>, std::int64_t> per_pair;
  /// Collective count per kind ("allgather", "allreduce", ...).
  std::map<std::string, std::int64_t> per_collective;
  /// Messages sent by each rank.
  std::vector<std::int64_t> sent_by_rank;

  std::int64_t messages_with_tag(int tag) const;
};

class Comm {
 public:
  explicit Comm(int size, ExecMode mode = ExecMode::Serial);

  int size() const { return size_; }
  ExecMode mode() const { return mode_; }

  /// Runs body(rank) for every rank; returns after all ranks completed.
  /// An exception thrown by any rank is rethrown here (lowest rank first).
  void run(const std::function<void(int rank)>& body);

  /// Thread-safe; the message is delivered after the current phase.
  void send(int source, int dest, int tag, std::vector<std::byte> data);

  /// Removes and returns all messages for `rank` with `tag`, ordered by
  /// source rank, then posting order.
  std::vector<Message> receive(int rank, int tag);

  /// Bookkeeping for a collective whose per-rank contributions were produced
  /// in a phase; every rank observes the full vector afterwards.
  template <class T>
  const std::vector<T>& allgather(const std::vector<T>& contributions) {
    record_collective("allgather");
    return contributions;
  }

  template <class T, class Op>
  T allreduce(const std::vector<T>& contributions, Op op) {
    record_collective("allreduce");
    T acc = contributions.at(0);
    for (std::size_t p = 1; p < contributions.size(); ++p) acc = op(acc, contributions[p]);
    return acc;
  }

  void record_collective(const std::string& kind);

  const Transcript& transcript() const { return transcript_; }
  void reset_transcript();

 private:
  struct Mailbox {
    std::mutex mutex;
    std::vector<std::pair<std::int64_t, Message>> pending;  // (sequence, message)
  };

  int size_;
  ExecMode mode_;
  std::vector<Mailbox> boxes_;
  std::mutex transcript_mutex_;
  Transcript transcript_;
  std::int64_t sequence_ = 0;
};

template <class T>
std::vector<std::byte> pack(std::span<const T> values) {
  static_assert(std::is_trivially_copyable_v<T>);
  std::vector<std::byte> out(values.size_bytes());
  if (!values.empty()) std::memcpy(out.data(), values.data(), values.size_bytes());
  return out;
}

template <class T>
std::vector<T> unpack(std::span<const std::byte> bytes) {
  static_assert(std::is_trivially_copyable_v<T>);
  std::vector<T> out(bytes.size() / sizeof(T));
  if (!out.empty()) std::memcpy(out.data(), bytes.data(), out.size() * sizeof(T));
  return out;
}

}  // namespace amr
