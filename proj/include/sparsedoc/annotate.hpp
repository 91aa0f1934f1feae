#pragma once

#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <shared_mutex>
#include <string>
#include <unordered_map>
#include <vector>

#include "sparsedoc/corpus.hpp"

namespace sparsedoc {

/// One entity awaiting (or having received) a relevance judgement.
struct AnnotationTask {
  std::string entity_id;
  std::string doc_id;
  std::string sentence;
  Span highlight;  // code points within `sentence`
  std::string term;
  std::string surface;
};

struct AnnotationRecord {
  std::string entity_id;
  bool relevant = false;
  std::string annotator;
  std::string timestamp;  // UTC, e.g. 2024-05-01T12:00:00.000Z
};

/// Entity records of a filtered file (as written by write_filtered), in file
/// order. Throws on unreadable files, malformed records and highlights that
/// fall outside their sentence.
std::vector<AnnotationTask> load_tasks(const std::filesystem::path& filtered);

std::string record_line(const AnnotationRecord& record);
AnnotationRecord parse_record(const std::string& line);

std::string utc_timestamp();

/// Export text: one relevance line per resolved entity, sorted by id.
std::string export_text(const std::map<std::string, bool>& resolved);

/// Resolves a log file from scratch (last record per entity wins) and
/// returns its export text.
std::string replay_export(const std::filesystem::path& log);

/// Append-only annotation log. Appends are serialized and flushed to disk
/// (fsync) before append() returns.
class AnnotationStore {
 public:
  explicit AnnotationStore(std::filesystem::path path);
  ~AnnotationStore();
  AnnotationStore(const AnnotationStore&) = delete;
  AnnotationStore& operator=(const AnnotationStore&) = delete;

  AnnotationRecord append(const std::string& entity_id, bool relevant, const std::string& annotator,
                          std::string timestamp = {});

  std::map<std::string, bool> resolved() const;
  std::size_t records() const;
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
  int fd_ = -1;
  mutable std::mutex write_mutex_;
  mutable std::shared_mutex state_mutex_;
  std::map<std::string, bool> resolved_;
  std::size_t records_ = 0;
};

struct HttpReply {
  int status = 200;
  std::string body;
  std::string content_type = "application/json";
};

/// Request handling for the annotation endpoints, independent of the HTTP
/// transport.
class AnnotationService {
 public:
  AnnotationService(std::vector<AnnotationTask> tasks, std::filesystem::path store_path);

  /// GET /api/tasks?status=pending|done|all&limit=K (limit 0 = no limit).
  HttpReply tasks(const std::string& status, const std::string& limit) const;
  /// POST /api/annotations {"entity_id", "relevant", "annotator"}.
  HttpReply annotate(const std::string& body);
  /// GET /api/progress -> {"done", "total"}.
  HttpReply progress() const;
  /// GET /api/export -> relevance lines.
  HttpReply export_annotations() const;

  std::size_t total() const { return tasks_.size(); }
  std::size_t done() const;
  AnnotationStore& store() { return store_; }

 private:
  std::vector<AnnotationTask> tasks_;
  std::unordered_map<std::string, std::size_t> index_;
  AnnotationStore store_;
};

/// HTTP front end. start() binds (throwing when the address is unusable)
/// and serves on a background thread; port 0 picks a free port.
class AnnotationServer {
 public:
  explicit AnnotationServer(AnnotationService& service);
  ~AnnotationServer();

  /// Binds without serving yet; returns the bound port.
  int bind(const std::string& host, int port);
  /// Serves on the calling thread until stop(); requires bind().
  void listen();
  /// bind() plus listen() on a background thread.
  int start(const std::string& host, int port);
  void stop();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace sparsedoc
