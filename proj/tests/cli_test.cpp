#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "eercf/cli.hpp"
#include "json.hpp"

namespace fs = std::filesystem;
using eercf::cli::run;

namespace {

struct Result {
  int code;
  std::string out, err;
};

Result call(const std::vector<std::string>& args) {
  std::ostringstream out, err;
  const int code = run(args, out, err);
  return {code, out.str(), err.str()};
}

fs::path scratch_dir() {
  const auto* info = ::testing::UnitTest::GetInstance()->current_test_info();
  auto dir = fs::temp_directory_path() / "eercf_tests" / (std::string("cli_") + info->name());
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

fs::path synth(const fs::path& dir, std::vector<std::string> extra = {}) {
  std::vector<std::string> args{"synth", "--videos", "40", "--queries", "40", "--dim", "16",
                                "--frames", "4", "--patches", "2", "--out", (dir / "data").string()};
  args.insert(args.end(), extra.begin(), extra.end());
  const auto r = call(args);
  EXPECT_EQ(r.code, 0) << r.err;
  return dir / "data";
}

std::vector<std::string> data_args(const fs::path& d) {
  return {"--gallery", (d / "videos.bin").string(), "--texts", (d / "texts.bin").string()};
}

}  // namespace

TEST(Cli, EvalOnCleanSynthetic) {
  const auto d = synth(scratch_dir());
  auto args = std::vector<std::string>{"eval"};
  for (auto& a : data_args(d)) args.push_back(a);
  args.insert(args.end(), {"--manifest", (d / "manifest.json").string()});
  const auto r = call(args);
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.out.find("R@1   100.0\n"), std::string::npos) << r.out;
  EXPECT_NE(r.out.find("Mean  100.0\n"), std::string::npos) << r.out;
}

TEST(Cli, EvalTextAndJsonAgree) {
  const auto d = synth(scratch_dir(), {"--noise", "1.5", "--mode", "patch-noise"});
  auto args = std::vector<std::string>{"eval"};
  for (auto& a : data_args(d)) args.push_back(a);
  args.insert(args.end(), {"--manifest", (d / "manifest.json").string(), "--top-k", "10"});
  const auto text = call(args);
  args.insert(args.end(), {"--format", "json"});
  const auto json = call(args);
  ASSERT_EQ(text.code, 0) << text.err;
  ASSERT_EQ(json.code, 0) << json.err;
  const auto j = nlohmann::json::parse(json.out);
  EXPECT_EQ(j.at("top_k"), 10);
  for (const auto& [label, key] : std::vector<std::pair<std::string, std::string>>{
           {"R@1   ", "r_at_1"}, {"R@5   ", "r_at_5"}, {"R@10  ", "r_at_10"}, {"Mean  ", "mean"}}) {
    EXPECT_NE(text.out.find(label + j.at(key).dump() + "\n"), std::string::npos) << label;
  }
}

TEST(Cli, EvalVideoToText) {
  const auto d = synth(scratch_dir());
  auto args = std::vector<std::string>{"eval"};
  for (auto& a : data_args(d)) args.push_back(a);
  args.insert(args.end(), {"--manifest", (d / "manifest.json").string(), "--v2t", "--format", "json"});
  const auto r = call(args);
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(nlohmann::json::parse(r.out).at("v2t").at("r_at_1"), 100.0);
}

TEST(Cli, SearchEmitsJsonLines) {
  const auto dir = scratch_dir();
  const auto d = synth(dir);
  auto args = std::vector<std::string>{"search"};
  for (auto& a : data_args(d)) args.push_back(a);
  args.insert(args.end(), {"--text-id", "text00003", "--text-id", "text00007", "--top-k", "5"});
  const auto r = call(args);
  ASSERT_EQ(r.code, 0) << r.err;
  std::istringstream lines(r.out);
  std::string line;
  std::vector<nlohmann::json> rows;
  while (std::getline(lines, line)) rows.push_back(nlohmann::json::parse(line));
  ASSERT_EQ(rows.size(), 2u);
  EXPECT_EQ(rows[0].at("text_id"), "text00003");
  EXPECT_EQ(rows[0].at("ranking").size(), 5u);
  EXPECT_EQ(rows[0].at("ranking")[0].at("video_id"), "video00003");
  EXPECT_EQ(rows[1].at("ranking")[0].at("video_id"), "video00007");

  args.insert(args.end(), {"--out", (dir / "out.jsonl").string()});
  ASSERT_EQ(call(args).code, 0);
  std::ifstream f(dir / "out.jsonl");
  EXPECT_EQ(std::string(std::istreambuf_iterator<char>(f), {}), r.out);
}

TEST(Cli, ValidationErrorsExitOne) {
  const auto d = synth(scratch_dir());
  auto args = std::vector<std::string>{"search"};
  for (auto& a : data_args(d)) args.push_back(a);
  auto zero = args;
  zero.insert(zero.end(), {"--top-k", "0"});
  EXPECT_EQ(call(zero).code, 1);
  auto unknown = args;
  unknown.insert(unknown.end(), {"--text-id", "missing"});
  EXPECT_EQ(call(unknown).code, 1);
  auto weights = args;
  weights.insert(weights.end(), {"--weights", "0,0,0"});
  EXPECT_EQ(call(weights).code, 1);
  EXPECT_EQ(call({}).code, 1);
  EXPECT_EQ(call({"frobnicate"}).code, 1);
  EXPECT_EQ(call({"flops"}).code, 1);
}

TEST(Cli, MissingFileExitsTwo) {
  const auto r = call({"eval", "--gallery", "/nonexistent/v.bin", "--texts", "/nonexistent/t.bin", "--manifest",
                       "/nonexistent/m.json"});
  EXPECT_EQ(r.code, 2);
  EXPECT_FALSE(r.err.empty());
}

TEST(Cli, CorruptContainerExitsOne) {
  const auto dir = scratch_dir();
  const auto d = synth(dir);
  std::ofstream(d / "videos.bin", std::ios::binary | std::ios::trunc) << "garbage";
  auto args = std::vector<std::string>{"search"};
  for (auto& a : data_args(d)) args.push_back(a);
  const auto r = call(args);
  EXPECT_EQ(r.code, 1);
  EXPECT_NE(r.err.find("BadMagic"), std::string::npos) << r.err;
}

TEST(Cli, FlopsPreset) {
  const auto r = call({"flops", "--preset", "msrvtt1k"});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.out.find("15.9k"), std::string::npos) << r.out;
  EXPECT_NE(r.out.find("EERCF"), std::string::npos);
  const auto j = call({"flops", "--method", "twostage", "--N", "1000", "--Nv", "12", "--Np", "588", "--Nr", "50",
                       "--format", "json"});
  ASSERT_EQ(j.code, 0) << j.err;
  EXPECT_NEAR(nlohmann::json::parse(j.out)[0].at("macs").get<double>(), 15897.6, 1e-9);
  EXPECT_EQ(call({"flops", "--method", "twostage", "--N", "10", "--Nr", "50"}).code, 1);
}

TEST(Cli, IngestFromJson) {
  const auto dir = scratch_dir();
  const nlohmann::json doc = {
      {"dataset", "tiny"},
      {"dim", 2},
      {"videos",
       {{{"id", "v1"}, {"frames", {{1, 0}, {0.5, 0.5}}}, {"patches", {{{1, 0}}, {{0, 1}}}}},
        {{"id", "v2"}, {"frames", {{0, 1}}}, {"patches", {{{0, 1}, {0.2, 0.8}}}}}}},
      {"texts", {{{"id", "t1"}, {"feature", {3, 4}}, {"caption", "a"}}}},
      {"pairs", {{{"text_id", "t1"}, {"video_id", "v2"}}}},
  };
  std::ofstream(dir / "in.json") << doc.dump();
  const auto r = call({"ingest", "--json", (dir / "in.json").string(), "--out", (dir / "out").string()});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_TRUE(fs::exists(dir / "out" / "videos.bin"));
  const auto e = call({"eval", "--gallery", (dir / "out" / "videos.bin").string(), "--texts",
                       (dir / "out" / "texts.bin").string(), "--manifest", (dir / "out" / "manifest.json").string(),
                       "--format", "json"});
  ASSERT_EQ(e.code, 0) << e.err;
  EXPECT_EQ(nlohmann::json::parse(e.out).at("queries"), 1);

  // Re-ingesting the binary output is accepted as well.
  const auto again = call({"ingest", "--videos", (dir / "out" / "videos.bin").string(), "--texts",
                           (dir / "out" / "texts.bin").string(), "--manifest",
                           (dir / "out" / "manifest.json").string(), "--out", (dir / "again").string()});
  EXPECT_EQ(again.code, 0) << again.err;
}

TEST(Cli, LosscheckPasses) {
  const auto r = call({"losscheck", "--seeds", "2", "--format", "json"});
  ASSERT_EQ(r.code, 0) << r.out << r.err;
  EXPECT_TRUE(nlohmann::json::parse(r.out).at("passed").get<bool>());
}
