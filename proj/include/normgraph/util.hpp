#pragma once

#include <atomic>
#include <chrono>
#include <cstdint>
#include <exception>
#include <filesystem>
#include <functional>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

namespace normgraph::util {

std::string trim(std::string_view s);
std::string to_lower(std::string_view s);
bool iequals(std::string_view a, std::string_view b);
bool istarts_with(std::string_view s, std::string_view prefix);
std::vector<std::string> split(std::string_view s, char sep);
std::vector<std::string> split_lines(std::string_view s);
std::string join(const std::vector<std::string>& parts, std::string_view sep);

/// Removes markdown emphasis markers (`**`, `__`, backticks) and a leading
/// list marker ("- ", "* ", "1. ", "2) ").
std::string strip_markup(std::string_view line);

std::uint64_t fnv1a64(std::string_view data);
std::string hex64(std::uint64_t v);
std::string content_hash(std::string_view data);

std::string read_file(const std::filesystem::path& p);
/// Writes through a temporary sibling and renames, so readers never see a
/// partially written file.
void write_file_atomic(const std::filesystem::path& p, std::string_view data);

std::string random_uuid();

/// Wall-clock source. Tests and reproducible runs install a fixed clock.
class Clock {
 public:
  using Fn = std::function<std::string()>;
  Clock();
  explicit Clock(Fn fn) : fn_(std::move(fn)) {}
  static Clock fixed(std::string stamp);
  std::string now() const { return fn_(); }

 private:
  Fn fn_;
};

/// Shared request budget: at most `per_second` acquisitions per second
/// across all threads. Zero disables limiting.
class RateLimiter {
 public:
  explicit RateLimiter(double per_second = 0.0);
  void acquire();

 private:
  std::mutex mu_;
  std::chrono::steady_clock::duration interval_{};
  std::chrono::steady_clock::time_point next_{};
};

/// Runs fn(i) for i in [0, n) on at most `limit` worker threads. The first
/// exception thrown by any task is rethrown after all workers join.
template <class Fn>
void bounded_parallel_for(std::size_t n, std::size_t limit, Fn&& fn) {
  if (n == 0) return;
  if (limit <= 1 || n == 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr first_error;
  std::mutex err_mu;
  {
    std::vector<std::jthread> workers;
    const std::size_t count = std::min(limit, n);
    workers.reserve(count);
    for (std::size_t w = 0; w < count; ++w) {
      workers.emplace_back([&] {
        for (;;) {
          const std::size_t i = next.fetch_add(1);
          if (i >= n) return;
          try {
            fn(i);
          } catch (...) {
            std::lock_guard lock(err_mu);
            if (!first_error) first_error = std::current_exception();
          }
        }
      });
    }
  }
  if (first_error) std::rethrow_exception(first_error);
}

}  // namespace normgraph::util
