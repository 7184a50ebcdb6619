#include "amr/comm.hpp"

#include <algorithm>
#include <exception>
#include <iterator>
#include <stdexcept>
#include <thread>

namespace amr {

std::int64_t Transcript::messages_with_tag(int tag) const {
  std::int64_t n = 0;
  for (const auto& [key, count] : per_pair)
    if (std::get<2>(key) == tag) n += count;
  return n;
}

Comm::Comm(int size, ExecMode mode) : size_(size), mode_(mode), boxes_(size > 0 ? size : 0) {
  if (size <= 0) throw std::invalid_argument("Comm: rank count must be positive");
  transcript_.sent_by_rank.assign(size, 0);
}

void Comm::run(const std::function<void(int rank)>& body) {
  std::vector<std::exception_ptr> errors(size_);
  if (mode_ == ExecMode::Serial || size_ == 1) {
    for (int p = 0; p < size_; ++p) {
      try {
        body(p);
      } catch (...) {
        errors[p] = std::current_exception();
      }
    }
  } else {
    std::vector<std::thread> workers;
    workers.reserve(size_);
    for (int p = 0; p < size_; ++p) {
      workers.emplace_back([&, p] {
        try {
          body(p);
        } catch (...) {
          errors[p] = std::current_exception();
        }
      });
    }
    for (auto& w : workers) w.join();
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

void Comm::send(int source, int dest, int tag, std::vector<std::byte> data) {
  if (source < 0 || source >= size_ || dest < 0 || dest >= size_) throw std::out_of_range("Comm::send: bad rank");
  std::int64_t seq = 0;
  {
    std::lock_guard lock(transcript_mutex_);
    seq = sequence_++;
    ++transcript_.messages;
    transcript_.bytes += static_cast<std::int64_t>(data.size());
    ++transcript_.per_pair[{source, dest, tag}];
    ++transcript_.sent_by_rank[source];
  }
  auto& box = boxes_[dest];
  std::lock_guard lock(box.mutex);
  box.pending.emplace_back(seq, Message{source, dest, tag, std::move(data)});
}

std::vector<Message> Comm::receive(int rank, int tag) {
  auto& box = boxes_.at(rank);
  std::vector<std::pair<std::int64_t, Message>> mine;
  {
    std::lock_guard lock(box.mutex);
    auto split = std::stable_partition(box.pending.begin(), box.pending.end(),
                                       [tag](const auto& m) { return m.second.tag != tag; });
    std::move(split, box.pending.end(), std::back_inserter(mine));
    box.pending.erase(split, box.pending.end());
  }
  // Threads post in nondeterministic order; sources post sequentially, so
  // (source, sequence) gives the same order in both modes.
  std::sort(mine.begin(), mine.end(), [](const auto& a, const auto& b) {
    if (a.second.source != b.second.source) return a.second.source < b.second.source;
    return a.first < b.first;
  });
  std::vector<Message> out;
  out.reserve(mine.size());
  for (auto& m : mine) out.push_back(std::move(m.second));
  return out;
}

void Comm::record_collective(const std::string& kind) {
  std::lock_guard lock(transcript_mutex_);
  ++transcript_.collectives;
  ++transcript_.per_collective[kind];
}

void Comm::reset_transcript() {
  std::lock_guard lock(transcript_mutex_);
  transcript_ = Transcript{};
  transcript_.sent_by_rank.assign(size_, 0);
}

}  // namespace amr
