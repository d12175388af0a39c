#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "velocity/domain.hpp"

namespace velocity::store {

inline constexpr std::size_t kDefaultWindow = 50;

// Standard file names inside a run directory.
inline constexpr const char* kPostsFile = "posts.jsonl";
inline constexpr const char* kDeletionsFile = "deletions.jsonl";
inline constexpr const char* kGroundTruthFile = "ground_truth.jsonl";
inline constexpr const char* kPublicFile = "public.jsonl";

// "seed<seed>-t<timestamp>"; the timestamp is the virtual end time so the name
// is reproducible.
std::string run_directory_name(std::uint64_t seed, Timestamp timestamp);

// Appends newline-terminated records. One writer per file.
class JsonlWriter {
 public:
  JsonlWriter() = default;
  // Truncates unless `append` is set.
  explicit JsonlWriter(const std::filesystem::path& path, bool append = false);

  void write(std::string_view line);
  void flush();
  bool is_open() const { return out_.is_open(); }
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
  std::ofstream out_;
  std::mutex mu_;
};

enum class ReplayMode {
  Strict,             // a final line without its newline is a parse error
  DropTruncatedTail,  // a final line without its newline is ignored
};

// Calls `on_line(line_number, text)` for every record (1-based numbering).
// Exceptions thrown by the callback are rethrown as ParseError naming the line.
void read_jsonl(const std::filesystem::path& path,
                const std::function<void(std::size_t, std::string_view)>& on_line,
                ReplayMode mode = ReplayMode::Strict);

template <class T, class Decode>
std::vector<T> read_all(const std::filesystem::path& path, Decode decode,
                        ReplayMode mode = ReplayMode::Strict) {
  std::vector<T> out;
  read_jsonl(path, [&](std::size_t, std::string_view line) { out.push_back(decode(line)); }, mode);
  return out;
}

template <class T, class Encode>
void write_all(const std::filesystem::path& path, const std::vector<T>& items, Encode encode) {
  JsonlWriter w(path);
  for (const auto& item : items) w.write(encode(item));
  w.flush();
}

enum class AppendResult { Stored, Duplicate };

// Append-only post store with an id index and, per user, the ids of the
// `window` newest posts ordered by created_at descending (ties by id).
class PostLog {
 public:
  explicit PostLog(std::size_t window = kDefaultWindow);

  PostLog(const PostLog&) = delete;
  PostLog& operator=(const PostLog&) = delete;
  PostLog(PostLog&& other) noexcept;
  PostLog& operator=(PostLog&& other) noexcept;

  // Idempotent by post_id. When a file is attached, stored posts are also
  // written to it.
  AppendResult append(const Post& post);

  std::vector<PostId> recent_window(UserId user) const;
  std::optional<Post> find(PostId id) const;
  bool contains(PostId id) const;
  std::size_t size() const;
  std::size_t window() const { return window_; }

  // Snapshot in append order.
  std::vector<Post> posts() const;

  void attach(const std::filesystem::path& path);
  void flush();

  // Rebuilds a log from a file written by an attached PostLog.
  static PostLog replay(const std::filesystem::path& path, std::size_t window = kDefaultWindow,
                        ReplayMode mode = ReplayMode::Strict);

  // Compares posts in append order and every user's window.
  bool same_index(const PostLog& other) const;

 private:
  void index(const Post& post, std::size_t slot);

  std::size_t window_;
  std::vector<Post> posts_;
  std::unordered_map<PostId, std::size_t> by_id_;
  std::unordered_map<UserId, std::vector<std::size_t>> rings_;
  std::unique_ptr<JsonlWriter> sink_;
  mutable std::mutex mu_;
};

}  // namespace velocity::store
