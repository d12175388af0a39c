#include "velocity/storage.hpp"

#include <algorithm>
#include <sstream>

#include "velocity/records.hpp"

namespace velocity::store {

std::string run_directory_name(std::uint64_t seed, Timestamp timestamp) {
  return "seed" + std::to_string(seed) + "-t" + std::to_string(timestamp);
}

JsonlWriter::JsonlWriter(const std::filesystem::path& path, bool append) : path_(path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  out_.open(path, std::ios::binary | (append ? std::ios::app : std::ios::trunc));
  if (!out_) throw Error("cannot open '" + path.string() + "' for writing");
}

void JsonlWriter::write(std::string_view line) {
  std::lock_guard lock(mu_);
  out_.write(line.data(), static_cast<std::streamsize>(line.size()));
  out_.put('\n');
  if (!out_) throw Error("write to '" + path_.string() + "' failed");
}

void JsonlWriter::flush() {
  std::lock_guard lock(mu_);
  out_.flush();
}

void read_jsonl(const std::filesystem::path& path,
                const std::function<void(std::size_t, std::string_view)>& on_line,
                ReplayMode mode) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open '" + path.string() + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  const std::string data = buf.str();

  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos < data.size()) {
    ++line_no;
    const std::size_t nl = data.find('\n', pos);
    if (nl == std::string::npos) {
      if (mode == ReplayMode::DropTruncatedTail) return;
      throw ParseError(line_no, "truncated record (missing newline) in " + path.string());
    }
    std::string_view line(data.data() + pos, nl - pos);
    pos = nl + 1;
    if (line.empty()) continue;
    try {
      on_line(line_no, line);
    } catch (const ParseError&) {
      throw;
    } catch (const std::exception& e) {
      throw ParseError(line_no, std::string(e.what()) + " in " + path.string());
    }
  }
}

PostLog::PostLog(std::size_t window) : window_(window) {}

PostLog::PostLog(PostLog&& other) noexcept
    : window_(other.window_),
      posts_(std::move(other.posts_)),
      by_id_(std::move(other.by_id_)),
      rings_(std::move(other.rings_)),
      sink_(std::move(other.sink_)) {}

PostLog& PostLog::operator=(PostLog&& other) noexcept {
  if (this != &other) {
    std::scoped_lock lock(mu_, other.mu_);
    window_ = other.window_;
    posts_ = std::move(other.posts_);
    by_id_ = std::move(other.by_id_);
    rings_ = std::move(other.rings_);
    sink_ = std::move(other.sink_);
  }
  return *this;
}

void PostLog::index(const Post& post, std::size_t slot) {
  by_id_.emplace(post.post_id, slot);
  auto& ring = rings_[post.user_id];
  auto newer = [&](std::size_t a, std::size_t b) {
    const Post& pa = posts_[a];
    const Post& pb = posts_[b];
    if (pa.created_at != pb.created_at) return pa.created_at > pb.created_at;
    return raw(pa.post_id) > raw(pb.post_id);
  };
  auto it = std::lower_bound(ring.begin(), ring.end(), slot, newer);
  if (it == ring.end() && ring.size() >= window_) return;
  ring.insert(it, slot);
  if (ring.size() > window_) ring.pop_back();
}

AppendResult PostLog::append(const Post& post) {
  std::lock_guard lock(mu_);
  if (by_id_.count(post.post_id) != 0) return AppendResult::Duplicate;
  posts_.push_back(post);
  index(posts_.back(), posts_.size() - 1);
  if (sink_) sink_->write(to_json_line(post));
  return AppendResult::Stored;
}

std::vector<PostId> PostLog::recent_window(UserId user) const {
  std::lock_guard lock(mu_);
  std::vector<PostId> out;
  auto it = rings_.find(user);
  if (it == rings_.end()) return out;
  out.reserve(it->second.size());
  for (std::size_t slot : it->second) out.push_back(posts_[slot].post_id);
  return out;
}

std::optional<Post> PostLog::find(PostId id) const {
  std::lock_guard lock(mu_);
  auto it = by_id_.find(id);
  if (it == by_id_.end()) return std::nullopt;
  return posts_[it->second];
}

bool PostLog::contains(PostId id) const {
  std::lock_guard lock(mu_);
  return by_id_.count(id) != 0;
}

std::size_t PostLog::size() const {
  std::lock_guard lock(mu_);
  return posts_.size();
}

std::vector<Post> PostLog::posts() const {
  std::lock_guard lock(mu_);
  return posts_;
}

void PostLog::attach(const std::filesystem::path& path) {
  std::lock_guard lock(mu_);
  sink_ = std::make_unique<JsonlWriter>(path, /*append=*/true);
}

void PostLog::flush() {
  std::lock_guard lock(mu_);
  if (sink_) sink_->flush();
}

PostLog PostLog::replay(const std::filesystem::path& path, std::size_t window, ReplayMode mode) {
  PostLog log(window);
  read_jsonl(
      path,
      [&](std::size_t line_no, std::string_view line) {
        if (log.append(post_from_json(line)) == AppendResult::Duplicate) {
          throw ParseError(line_no, "duplicate post_id in " + path.string());
        }
      },
      mode);
  return log;
}

bool PostLog::same_index(const PostLog& other) const {
  std::scoped_lock lock(mu_, other.mu_);
  if (window_ != other.window_ || posts_ != other.posts_) return false;
  if (rings_.size() != other.rings_.size()) return false;
  for (const auto& [user, ring] : rings_) {
    auto it = other.rings_.find(user);
    if (it == other.rings_.end() || it->second != ring) return false;
  }
  return true;
}

}  // namespace velocity::store
