#include "sparsedoc/annotate.hpp"

#include <fcntl.h>
#include <unistd.h>

#include <cerrno>
#include <chrono>
#include <cstring>
#include <ctime>
#include <fstream>
#include <thread>

#include <httplib.h>
#include <nlohmann/json.hpp>

#include "sparsedoc/errors.hpp"
#include "sparsedoc/filter.hpp"
#include "sparsedoc/text.hpp"

namespace sparsedoc {

using nlohmann::json;

std::vector<AnnotationTask> load_tasks(const std::filesystem::path& filtered) {
  std::ifstream probe(filtered);
  if (!probe) throw NotFoundError("cannot read filtered file " + filtered.string());
  probe.close();
  std::vector<AnnotationTask> tasks;
  const auto lines = read_lines(filtered);
  for (std::size_t i = 0; i < lines.size(); ++i) {
    if (trim(lines[i]).empty()) continue;
    json r;
    try {
      r = json::parse(lines[i]);
      if (!r.is_object()) throw ParseError(filtered.string(), i + 1, "expected a JSON object");
      if (r.value("kind", "") != "entity") continue;
      AnnotationTask t;
      t.entity_id = r.at("entity_id").get<std::string>();
      t.doc_id = r.at("doc_id").get<std::string>();
      t.sentence = r.at("sentence").get<std::string>();
      t.highlight = {r.at("highlight").at(0).get<std::size_t>(), r.at("highlight").at(1).get<std::size_t>()};
      t.term = r.at("term").get<std::string>();
      t.surface = r.at("surface").get<std::string>();
      if (t.highlight.begin >= t.highlight.end || t.highlight.end > utf8_length(t.sentence)) {
        throw ParseError(filtered.string(), i + 1, "highlight outside the sentence");
      }
      tasks.push_back(std::move(t));
    } catch (const json::exception& e) {
      throw ParseError(filtered.string(), i + 1, e.what());
    }
  }
  return tasks;
}

std::string record_line(const AnnotationRecord& r) {
  return json{{"entity_id", r.entity_id}, {"relevant", r.relevant}, {"annotator", r.annotator},
              {"timestamp", r.timestamp}}
      .dump();
}

AnnotationRecord parse_record(const std::string& line) {
  const json r = json::parse(line);
  AnnotationRecord out;
  out.entity_id = r.at("entity_id").get<std::string>();
  out.relevant = r.at("relevant").get<bool>();
  out.annotator = r.value("annotator", "");
  out.timestamp = r.value("timestamp", "");
  return out;
}

std::string utc_timestamp() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t secs = std::chrono::system_clock::to_time_t(now);
  const auto ms =
      std::chrono::duration_cast<std::chrono::milliseconds>(now.time_since_epoch()).count() % 1000;
  std::tm tm{};
  gmtime_r(&secs, &tm);
  char buf[40];
  const std::size_t n = std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%S", &tm);
  std::snprintf(buf + n, sizeof buf - n, ".%03dZ", static_cast<int>(ms));
  return buf;
}

std::string export_text(const std::map<std::string, bool>& resolved) {
  std::string out;
  for (const auto& [id, relevant] : resolved) {
    out += relevance_line({id, relevant});
    out += '\n';
  }
  return out;
}

namespace {

std::map<std::string, bool> fold_log(const std::filesystem::path& log, std::size_t* count) {
  std::map<std::string, bool> resolved;
  std::size_t n = 0;
  if (!std::filesystem::exists(log)) return resolved;
  const auto lines = read_lines(log);
  for (std::size_t i = 0; i < lines.size(); ++i) {
    if (trim(lines[i]).empty()) continue;
    try {
      const auto r = parse_record(lines[i]);
      resolved[r.entity_id] = r.relevant;
      ++n;
    } catch (const json::exception& e) {
      throw ParseError(log.string(), i + 1, e.what());
    }
  }
  if (count) *count = n;
  return resolved;
}

}  // namespace

std::string replay_export(const std::filesystem::path& log) { return export_text(fold_log(log, nullptr)); }

AnnotationStore::AnnotationStore(std::filesystem::path path) : path_(std::move(path)) {
  resolved_ = fold_log(path_, &records_);
  fd_ = ::open(path_.c_str(), O_WRONLY | O_APPEND | O_CREAT | O_CLOEXEC, 0644);
  if (fd_ < 0) throw Error("cannot open annotation store " + path_.string() + ": " + std::strerror(errno));
}

AnnotationStore::~AnnotationStore() {
  if (fd_ >= 0) ::close(fd_);
}

AnnotationRecord AnnotationStore::append(const std::string& entity_id, bool relevant, const std::string& annotator,
                                         std::string timestamp) {
  AnnotationRecord r{entity_id, relevant, annotator, timestamp.empty() ? utc_timestamp() : std::move(timestamp)};
  const std::string line = record_line(r) + "\n";
  std::lock_guard<std::mutex> lock(write_mutex_);
  std::size_t written = 0;
  while (written < line.size()) {
    const ssize_t n = ::write(fd_, line.data() + written, line.size() - written);
    if (n < 0) {
      if (errno == EINTR) continue;
      throw Error("annotation store write failed: " + std::string(std::strerror(errno)));
    }
    written += static_cast<std::size_t>(n);
  }
  if (::fsync(fd_) != 0) throw Error("annotation store fsync failed: " + std::string(std::strerror(errno)));
  std::unique_lock<std::shared_mutex> state(state_mutex_);
  resolved_[entity_id] = relevant;
  ++records_;
  return r;
}

std::map<std::string, bool> AnnotationStore::resolved() const {
  std::shared_lock<std::shared_mutex> lock(state_mutex_);
  return resolved_;
}

std::size_t AnnotationStore::records() const {
  std::shared_lock<std::shared_mutex> lock(state_mutex_);
  return records_;
}

AnnotationService::AnnotationService(std::vector<AnnotationTask> tasks, std::filesystem::path store_path)
    : tasks_(std::move(tasks)), store_(std::move(store_path)) {
  for (std::size_t i = 0; i < tasks_.size(); ++i) {
    if (!index_.emplace(tasks_[i].entity_id, i).second) {
      throw ValidationError("duplicate entity id " + tasks_[i].entity_id + " in the filtered file");
    }
  }
}

namespace {

HttpReply error_reply(int status, const std::string& message) { return {status, json{{"error", message}}.dump()}; }

}  // namespace

std::size_t AnnotationService::done() const {
  std::size_t n = 0;
  for (const auto& [id, _] : store_.resolved()) n += index_.count(id);
  return n;
}

HttpReply AnnotationService::tasks(const std::string& status, const std::string& limit) const {
  const std::string s = status.empty() ? "pending" : status;
  if (s != "pending" && s != "done" && s != "all") return error_reply(400, "status must be pending, done or all");
  std::size_t max = 50;
  if (!limit.empty()) {
    try {
      std::size_t used = 0;
      const long long v = std::stoll(limit, &used);
      if (used != limit.size() || v < 0) throw std::invalid_argument(limit);
      max = static_cast<std::size_t>(v);
    } catch (const std::exception&) {
      return error_reply(400, "limit must be a non-negative integer");
    }
  }
  const auto resolved = store_.resolved();
  json out = json::array();
  for (const auto& t : tasks_) {
    if (max != 0 && out.size() >= max) break;
    const auto it = resolved.find(t.entity_id);
    const bool is_done = it != resolved.end();
    if ((s == "pending" && is_done) || (s == "done" && !is_done)) continue;
    json j = {{"entity_id", t.entity_id},   {"doc_id", t.doc_id},
              {"sentence", t.sentence},     {"highlight", {t.highlight.begin, t.highlight.end}},
              {"term", t.term},             {"surface", t.surface},
              {"status", is_done ? "done" : "pending"}};
    j["relevant"] = is_done ? json(it->second) : json(nullptr);
    out.push_back(std::move(j));
  }
  return {200, out.dump()};
}

HttpReply AnnotationService::annotate(const std::string& body) {
  json r;
  try {
    r = json::parse(body);
  } catch (const json::parse_error&) {
    return error_reply(400, "body is not valid JSON");
  }
  if (!r.is_object() || !r.contains("entity_id") || !r["entity_id"].is_string() || !r.contains("relevant") ||
      !r["relevant"].is_boolean() || (r.contains("annotator") && !r["annotator"].is_string())) {
    return error_reply(400, "expected {\"entity_id\": string, \"relevant\": bool, \"annotator\": string}");
  }
  const std::string id = r["entity_id"].get<std::string>();
  if (!index_.count(id)) return error_reply(404, "unknown entity_id " + id);
  const std::string annotator = r.value("annotator", "anonymous");
  try {
    const auto rec = store_.append(id, r["relevant"].get<bool>(), annotator);
    return {200, record_line(rec)};
  } catch (const Error& e) {
    return error_reply(500, e.what());
  }
}

HttpReply AnnotationService::progress() const {
  return {200, json{{"done", done()}, {"total", total()}}.dump()};
}

HttpReply AnnotationService::export_annotations() const {
  return {200, export_text(store_.resolved()), "application/x-ndjson"};
}

struct AnnotationServer::Impl {
  AnnotationService& service;
  httplib::Server server;
  std::thread thread;

  explicit Impl(AnnotationService& s) : service(s) {
    auto send = [](httplib::Response& res, const HttpReply& reply) {
      res.status = reply.status;
      res.set_content(reply.body, reply.content_type);
    };
    server.set_default_headers({{"Access-Control-Allow-Origin", "*"},
                                {"Access-Control-Allow-Headers", "Content-Type"},
                                {"Access-Control-Allow-Methods", "GET, POST, OPTIONS"}});
    server.Options(R"(/api/.*)", [](const httplib::Request&, httplib::Response& res) { res.status = 204; });
    server.Get("/api/tasks", [this, send](const httplib::Request& req, httplib::Response& res) {
      send(res, service.tasks(req.get_param_value("status"), req.get_param_value("limit")));
    });
    server.Post("/api/annotations", [this, send](const httplib::Request& req, httplib::Response& res) {
      send(res, service.annotate(req.body));
    });
    server.Get("/api/progress",
               [this, send](const httplib::Request&, httplib::Response& res) { send(res, service.progress()); });
    server.Get("/api/export", [this, send](const httplib::Request&, httplib::Response& res) {
      send(res, service.export_annotations());
    });
  }

  int bind(const std::string& host, int port) {
    if (port == 0) {
      const int p = server.bind_to_any_port(host);
      if (p < 0) throw Error("cannot bind " + host);
      return p;
    }
    if (!server.bind_to_port(host, port)) {
      throw Error("cannot bind " + host + ":" + std::to_string(port) + " (address in use?)");
    }
    return port;
  }
};

AnnotationServer::AnnotationServer(AnnotationService& service) : impl_(std::make_unique<Impl>(service)) {}

AnnotationServer::~AnnotationServer() { stop(); }

int AnnotationServer::start(const std::string& host, int port) {
  const int bound = impl_->bind(host, port);
  impl_->thread = std::thread([this] { impl_->server.listen_after_bind(); });
  impl_->server.wait_until_ready();
  return bound;
}

int AnnotationServer::bind(const std::string& host, int port) { return impl_->bind(host, port); }

void AnnotationServer::listen() {
  if (!impl_->server.listen_after_bind()) throw Error("annotation server stopped with an error");
}

void AnnotationServer::stop() {
  if (!impl_) return;
  impl_->server.stop();
  if (impl_->thread.joinable()) impl_->thread.join();
}

}  // namespace sparsedoc
