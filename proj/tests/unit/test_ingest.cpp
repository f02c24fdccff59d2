#include "catch_amalgamated.hpp"

#include <algorithm>
#include <random>
#include <sstream>

#include "cobra/ingest.hpp"

using namespace cobra;
using namespace cobra::ingest;

TEST_CASE("one whitespace line", "[ingest]") {
  std::istringstream in("7 142 63 0.31\n");
  const auto r = parse_records(in);
  REQUIRE(r.records.size() == 1);
  CHECK(r.rejects.empty());
  CHECK(r.records[0] == ResponseRecord{"7", "142", 63, 0.31});
  const auto ev = to_evidence(r.records[0]);
  CHECK(ev.target == AgentId("142"));
  CHECK(ev.context == ContextVector{1.0});
  CHECK(ev.outcome == 1);
}

TEST_CASE("commas, comments and blank lines", "[ingest]") {
  std::istringstream in("# user service slice rt\n\n1,2,0,0.5\n  1 3 31 4.2  \n");
  const auto r = parse_records(in);
  REQUIRE(r.records.size() == 2);
  CHECK(r.records[0] == ResponseRecord{"1", "2", 0, 0.5});
  CHECK(r.records[1] == ResponseRecord{"1", "3", 31, 4.2});
  CHECK(to_evidence(r.records[1]).context == ContextVector{31.0 / 63.0});
}

TEST_CASE("missing measurements are rejected", "[ingest]") {
  std::istringstream in("1 2 0 0.5\n1 2 1 -1\n1 2 2 0.7\n1 2 3 0.9\n");
  const auto r = parse_records(in);
  CHECK(r.records.size() == 3);
  REQUIRE(r.rejects.size() == 1);
  CHECK(r.rejects[0].line == 2);
  CHECK(r.rejects[0].reason.find("response time") != std::string::npos);
}

TEST_CASE("bad slices are rejected", "[ingest]") {
  std::istringstream in("1 2 64 0.5\n1 2 x 0.5\n1 2 3\n1 2 3 0.2\n1 2 4 0.2\n1 2 5 0.2\n1 2 6 0.2\n");
  const auto r = parse_records(in);
  CHECK(r.records.size() == 4);
  CHECK(r.rejects.size() == 3);
}

TEST_CASE("an empty file is empty", "[ingest]") {
  std::istringstream in("");
  const auto r = parse_records(in);
  CHECK(r.records.empty());
  CHECK(r.rejects.empty());
}

TEST_CASE("mostly garbage raises", "[ingest]") {
  std::istringstream in("hello\nworld\n1 2 3 0.5\n");
  CHECK_THROWS_AS(parse_records(in), ParseError);
  CHECK_THROWS_AS(parse_records_file("/nonexistent/qos.txt"), std::runtime_error);
}

TEST_CASE("SLA labels", "[ingest]") {
  CHECK(label_sla(0.31) == 1);
  CHECK(label_sla(1.0) == 1);
  CHECK(label_sla(2.5) == 0);
  CHECK(label_sla(2.5, 3.0) == 1);
  CHECK_THROWS_AS(label_sla(0.0), std::invalid_argument);
  CHECK_THROWS_AS(label_sla(-1.0), std::invalid_argument);
}

TEST_CASE("partition by user keeps file order", "[ingest]") {
  const std::vector<ResponseRecord> recs{
      {"u1", "s1", 0, 0.2}, {"u2", "s1", 1, 2.0}, {"u1", "s2", 2, 3.0}, {"u2", "s3", 3, 0.1}};
  const auto parts = partition_by_user(recs);
  REQUIRE(parts.size() == 2);
  const auto& u1 = parts.at("u1");
  REQUIRE(u1.size() == 2);
  CHECK(u1[0].target == AgentId("s1"));
  CHECK(u1[0].outcome == 1);
  CHECK(u1[1].target == AgentId("s2"));
  CHECK(u1[1].outcome == 0);
  CHECK(to_evidence(recs, "u2") == parts.at("u2"));
  CHECK(to_evidence(recs, "nobody").empty());
}

TEST_CASE("serialization is lossless", "[ingest][property]") {
  std::mt19937_64 rng(12);
  std::uniform_real_distribution<double> rt(1e-6, 20.0);
  std::vector<ResponseRecord> recs;
  for (int i = 0; i < 500; ++i) {
    recs.push_back({std::to_string(rng() % 30), std::to_string(rng() % 400), static_cast<unsigned>(rng() % 64), rt(rng)});
  }
  std::stringstream ss;
  write_records(ss, recs);
  const auto back = parse_records(ss);
  CHECK(back.rejects.empty());
  CHECK(back.records == recs);
}

TEST_CASE("subsampling", "[ingest]") {
  std::vector<ResponseRecord> recs;
  for (unsigned i = 0; i < 1000; ++i) recs.push_back({"u", std::to_string(i), i % 64, 0.5});
  const auto s = subsample(recs, 100, 4);
  REQUIRE(s.size() == 100);
  CHECK(s == subsample(recs, 100, 4));
  CHECK_FALSE(s == subsample(recs, 100, 5));
  // File order is kept.
  auto index = [](const ResponseRecord& r) { return std::stoul(r.service_id); };
  CHECK(std::is_sorted(s.begin(), s.end(), [&](const auto& a, const auto& b) { return index(a) < index(b); }));
  CHECK(subsample(recs, 5000, 4) == recs);
  CHECK(subsample(recs, 0, 4).empty());
}
