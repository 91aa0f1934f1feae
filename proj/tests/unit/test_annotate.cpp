#include <algorithm>
#include <thread>

#include <doctest.h>
#include <httplib.h>
#include <nlohmann/json.hpp>

#include "sparsedoc/annotate.hpp"
#include "sparsedoc/errors.hpp"
#include "sparsedoc/filter.hpp"
#include "test_util.hpp"

using namespace sparsedoc;
using nlohmann::json;

namespace {

/// Filtered file with three entities over two documents.
std::filesystem::path make_filtered(const testutil::TempDir& dir) {
  const DocumentSet corpus = {{"d1", "The patient is a smoker. Her father is a smoker.", std::string("current")},
                              {"d2", "No tobacco user here, she says.", std::string("never")},
                              {"d3", "Nothing to see.", std::string("never")}};
  const auto filtered = filter_corpus(corpus, make_vocab({"smoker", "tobacco user"}), "never");
  const auto path = dir / "filtered.jsonl";
  write_filtered(corpus, filtered, path);
  return path;
}

}  // namespace

TEST_CASE("tasks load from a filtered file") {
  testutil::TempDir dir;
  const auto tasks = load_tasks(make_filtered(dir));
  REQUIRE(tasks.size() == 3);
  CHECK(tasks[0].doc_id == "d1");
  CHECK(tasks[0].sentence == "The patient is a smoker.");
  CHECK(tasks[0].highlight.begin == 17);
  CHECK(tasks[0].highlight.end == 23);
  CHECK(tasks[2].surface == "tobacco user");
  CHECK_THROWS_AS(load_tasks(dir / "missing.jsonl"), NotFoundError);
  testutil::write_file(dir / "bad.jsonl",
                       R"({"kind":"entity","entity_id":"x","doc_id":"d","sentence":"ab","highlight":[0,9],)"
                       R"("term":"t","surface":"ab"})"
                       "\n");
  CHECK_THROWS_AS(load_tasks(dir / "bad.jsonl"), ParseError);
}

TEST_CASE("store: last record wins, replay equals the live export, restart keeps state") {
  testutil::TempDir dir;
  const auto log = dir / "store.jsonl";
  {
    AnnotationStore s(log);
    s.append("b", true, "ann1", "2024-01-01T00:00:00.000Z");
    s.append("a", false, "ann1");
    s.append("b", false, "ann2");
    CHECK(s.records() == 3);
    CHECK(s.resolved() == std::map<std::string, bool>{{"a", false}, {"b", false}});
    CHECK(export_text(s.resolved()) == replay_export(log));
  }
  AnnotationStore reopened(log);
  CHECK(reopened.records() == 3);
  CHECK(reopened.resolved().at("b") == false);
  CHECK(replay_export(log) ==
        "{\"entity_id\":\"a\",\"relevant\":false}\n{\"entity_id\":\"b\",\"relevant\":false}\n");
  const auto rec = parse_record(record_line({"z", true, "me", "t"}));
  CHECK(rec.entity_id == "z");
  CHECK(rec.relevant);
  CHECK(rec.annotator == "me");
  CHECK(utc_timestamp().size() == 24);
}

TEST_CASE("store: concurrent appends are all persisted as whole lines") {
  testutil::TempDir dir;
  AnnotationStore s(dir / "store.jsonl");
  std::vector<std::thread> threads;
  for (int t = 0; t < 4; ++t) {
    threads.emplace_back([&s, t] {
      for (int i = 0; i < 25; ++i) s.append("e" + std::to_string(t * 25 + i), i % 2 == 0, "t" + std::to_string(t));
    });
  }
  for (auto& th : threads) th.join();
  CHECK(s.records() == 100);
  CHECK(s.resolved().size() == 100);
  const std::string text = testutil::read_file(dir / "store.jsonl");
  CHECK(std::count(text.begin(), text.end(), '\n') == 100);
  CHECK(AnnotationStore(dir / "store.jsonl").resolved() == s.resolved());
}

TEST_CASE("service request handling") {
  testutil::TempDir dir;
  AnnotationService svc(load_tasks(make_filtered(dir)), dir / "store.jsonl");
  const auto pending = json::parse(svc.tasks("", "").body);
  REQUIRE(pending.size() == 3);
  const std::string id = pending[0]["entity_id"];

  CHECK(svc.annotate(R"({"entity_id":")" + id + R"(","relevant":true})").status == 200);
  CHECK(json::parse(svc.tasks("pending", "").body).size() == 2);
  const auto done = json::parse(svc.tasks("done", "").body);
  REQUIRE(done.size() == 1);
  CHECK(done[0]["relevant"] == true);
  CHECK(json::parse(svc.tasks("all", "1").body).size() == 1);
  CHECK(json::parse(svc.tasks("all", "0").body).size() == 3);
  CHECK(json::parse(svc.progress().body) == json{{"done", 1}, {"total", 3}});
  CHECK(svc.store().records() == 1);

  CHECK(svc.tasks("weird", "").status == 400);
  CHECK(svc.tasks("", "-1").status == 400);
  CHECK(svc.tasks("", "x").status == 400);
  CHECK(svc.annotate("not json").status == 400);
  CHECK(svc.annotate(R"({"entity_id":"abc"})").status == 400);
  CHECK(svc.annotate(R"({"entity_id":")" + id + R"(","relevant":"yes"})").status == 400);
  CHECK(svc.annotate(R"({"entity_id":"0000000000000000","relevant":true})").status == 404);
  const auto exported = svc.export_annotations();
  CHECK(exported.body == "{\"entity_id\":\"" + id + "\",\"relevant\":true}\n");
}

TEST_CASE("HTTP server round trip on an ephemeral port") {
  testutil::TempDir dir;
  const auto filtered = make_filtered(dir);
  std::string first_export;
  {
    AnnotationService svc(load_tasks(filtered), dir / "store.jsonl");
    AnnotationServer server(svc);
    const int port = server.start("127.0.0.1", 0);
    REQUIRE(port > 0);
    httplib::Client cli("127.0.0.1", port);
    auto tasks = cli.Get("/api/tasks?status=all");
    REQUIRE(tasks);
    CHECK(tasks->status == 200);
    const auto list = json::parse(tasks->body);
    REQUIRE(list.size() == 3);
    for (const auto& t : list) {
      const json body = {{"entity_id", t["entity_id"]}, {"relevant", t["doc_id"] == "d1"}, {"annotator", "tester"}};
      auto res = cli.Post("/api/annotations", body.dump(), "application/json");
      REQUIRE(res);
      CHECK(res->status == 200);
    }
    auto bad = cli.Post("/api/annotations", R"({"entity_id":"nope","relevant":true})", "application/json");
    REQUIRE(bad);
    CHECK(bad->status == 404);
    auto progress = cli.Get("/api/progress");
    REQUIRE(progress);
    CHECK(json::parse(progress->body)["done"] == 3);
    auto exp = cli.Get("/api/export");
    REQUIRE(exp);
    first_export = exp->body;
    CHECK(std::count(first_export.begin(), first_export.end(), '\n') == 3);
    CHECK(exp->get_header_value("Access-Control-Allow-Origin") == "*");
    server.stop();
  }
  AnnotationService again(load_tasks(filtered), dir / "store.jsonl");
  CHECK(again.export_annotations().body == first_export);
  CHECK(replay_export(dir / "store.jsonl") == first_export);
}
