// Acceptance suite. Prints one PASS/FAIL line per criterion and exits nonzero
// if any fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "eercf/cli.hpp"
#include "eercf/flops.hpp"
#include "eercf/losses.hpp"
#include "eercf/random.hpp"
#include "eercf/ranking.hpp"
#include "eercf/testkit.hpp"
#include "eercf/tib.hpp"
#include "json.hpp"

namespace fs = std::filesystem;
using namespace eercf;

namespace {

// Tolerances.
constexpr double kFlopsRelTol = 0.05;
constexpr double kOracleScoreTol = 1e-6;
constexpr double kTwoStageMinGain = 10.0;  // R@1 points
constexpr double kTibLimitTol = 1e-4;
constexpr double kTibExactTol = 1e-12;
constexpr std::size_t kTibInstances = 1000;
constexpr double kHighTemperature = 1e6;
constexpr double kLowTemperature = 1e-6;

int failures = 0;

void report(bool ok, const std::string& name, const std::string& detail) {
  std::printf("%s  %s: %s\n", ok ? "PASS" : "FAIL", name.c_str(), detail.c_str());
  std::fflush(stdout);
  if (!ok) ++failures;
}

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof(buf), f, args...);
  return buf;
}

struct Expected {
  const char* label;
  double macs;
};

void check_flops_table(const std::string& name, const std::string& preset_name, const std::vector<Expected>& expected) {
  const auto rows = flops::flops_table(flops::preset(preset_name));
  bool ok = true;
  std::string detail;
  for (const auto& e : expected) {
    const auto it = std::find_if(rows.begin(), rows.end(), [&](const flops::Row& r) { return r.label == e.label; });
    const double got = it == rows.end() ? NAN : it->macs;
    const double rel = std::abs(got - e.macs) / e.macs;
    ok = ok && rel <= kFlopsRelTol;
    detail += fmt("%s %s vs %s (%.1f%%); ", e.label, flops::format_k(got).c_str(), flops::format_k(e.macs).c_str(),
                  100.0 * rel);
  }
  report(ok, name, detail + fmt("tolerance %.0f%%", 100.0 * kFlopsRelTol));
}

void flops_table1() {
  check_flops_table("flops-table1", "msrvtt1k",
                    {{"CLIP4Clip", 500.0},
                     {"TS2-Net", 6100.0},
                     {"DRL", 220400.0},
                     {"X-CLIP", 220900.0},
                     {"X-Pool", 275000.0},
                     {"EERCF", 16000.0}});
}

void flops_table2() {
  const auto one = [](const char* preset_name, double macs) {
    const auto rows = flops::flops_table(flops::preset(preset_name));
    const auto it = std::find_if(rows.begin(), rows.end(), [](const flops::Row& r) { return r.label == "EERCF"; });
    return std::pair{it->macs, macs};
  };
  bool ok = true;
  std::string detail;
  for (const auto& [name, pair] : {std::pair{"msrvtt3k", one("msrvtt3k", 5700.0)},
                                   std::pair{"vatex", one("vatex", 10800.0)},
                                   std::pair{"activitynet", one("activitynet", 17300.0)}}) {
    const double rel = std::abs(pair.first - pair.second) / pair.second;
    ok = ok && rel <= kFlopsRelTol;
    detail += fmt("%s %s vs %s (%.1f%%); ", name, flops::format_k(pair.first).c_str(),
                  flops::format_k(pair.second).c_str(), 100.0 * rel);
  }
  report(ok, "flops-table2", detail + fmt("tolerance %.0f%%", 100.0 * kFlopsRelTol));
}

void oracle_equivalence() {
  const auto start = std::chrono::steady_clock::now();
  std::size_t order_mismatches = 0, queries = 0;
  double worst = 0.0;
  const testkit::DistractorMode modes[] = {testkit::DistractorMode::None, testkit::DistractorMode::CoarseConfusable,
                                           testkit::DistractorMode::PatchNoise};
  for (std::uint64_t g = 0; g < 50; ++g) {
    testkit::SynthConfig c;
    c.seed = 1000 + g;
    c.videos = 20 + (g * 37) % 181;  // 20..200
    c.queries = 10;
    c.dim = 32;
    c.frames = 2 + g % 7;
    c.patches_per_frame = 1 + g % 5;
    c.noise = 0.5 * static_cast<double>(g % 4);
    c.mode = modes[g % 3];
    const auto data = testkit::generate(c);
    const auto gallery = data.gallery();
    SearchConfig cfg;
    cfg.top_k = gallery.size();
    for (const auto& text : data.texts) {
      const auto got = search(text.feature, gallery, cfg);
      const auto want = testkit::brute_force_rank(text, gallery, cfg);
      ++queries;
      bool same = got.size() == want.size();
      for (std::size_t r = 0; same && r < got.size(); ++r) {
        same = got.entries[r].index == want.entries[r].index;
        worst = std::max(worst, std::abs(got.entries[r].score - want.entries[r].score));
      }
      if (!same) ++order_mismatches;
    }
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  report(order_mismatches == 0 && worst <= kOracleScoreTol && secs < 60.0, "oracle-equivalence",
         fmt("50 galleries, %zu queries, %zu order mismatches, max score diff %.2e (tol %.0e), %.1fs", queries,
             order_mismatches, worst, kOracleScoreTol, secs));
}

Metrics metrics_for(const testkit::SynthData& data, const Gallery& gallery, bool recall_only, std::size_t top_k) {
  const auto queries = build_queries(data.texts, gallery, data.manifest.pairs);
  SearchConfig cfg;
  cfg.top_k = top_k;
  std::vector<RankedList> lists;
  if (recall_only) {
    for (const auto& q : queries) lists.push_back(recall_topk(q.text->feature, gallery, top_k));
  } else {
    lists = search_all(queries, gallery, cfg, 1);
  }
  return metrics_from_lists(queries, lists);
}

void two_stage_benefit() {
  testkit::SynthConfig c;
  c.videos = 100;
  c.queries = 200;
  c.dim = 64;
  c.frames = 8;
  c.patches_per_frame = 4;
  c.seed = 1;
  c.noise = 0.3;
  c.mode = testkit::DistractorMode::CoarseConfusable;
  const auto data = testkit::generate(c);
  const auto gallery = data.gallery();
  const auto recall = metrics_for(data, gallery, true, 50);
  const auto two_stage = metrics_for(data, gallery, false, 50);
  const double gain = two_stage.r_at_1 - recall.r_at_1;
  report(gain >= kTwoStageMinGain && two_stage.queries == 200, "two-stage-benefit",
         fmt("coarse-confusable seed 1, %zu queries: two-stage R@1 %.1f, recall-only R@1 %.1f, gain %.1f (min %.0f)",
             two_stage.queries, two_stage.r_at_1, recall.r_at_1, gain, kTwoStageMinGain));
}

void topk_noise() {
  testkit::SynthConfig c;
  c.videos = 512;
  c.queries = 200;
  c.dim = 64;
  c.frames = 8;
  c.patches_per_frame = 4;
  c.seed = 1;
  c.noise = 0.0;
  c.mode = testkit::DistractorMode::PatchNoise;
  const auto data = testkit::generate(c);
  const auto gallery = data.gallery();
  const auto small = metrics_for(data, gallery, false, 50);
  const auto all = metrics_for(data, gallery, false, gallery.size());
  report(small.mean >= all.mean, "topk-noise",
         fmt("patch-noise seed 1, N=512: Mean at top-k=50 %.2f, at top-k=N %.2f", small.mean, all.mean));
}

void tib_limits() {
  Rng rng(20240601);
  double high_dev = 0.0, low_dev = 0.0, simplex_dev = 0.0, perm_dev = 0.0;
  bool negative = false;
  for (std::size_t i = 0; i < kTibInstances; ++i) {
    const auto rows = 2 + static_cast<Eigen::Index>(rng.below(31));
    const auto dim = 1 + static_cast<Eigen::Index>(rng.below(64));
    const Eigen::MatrixXd f = rng.normal_matrix(rows, dim);
    const Eigen::VectorXd t = normalize(rng.normal_vector(dim));
    const double pi = std::pow(10.0, rng.uniform(-2.0, 0.0));

    const Eigen::VectorXd w = tib_weights(f, t, pi);
    negative = negative || (w.array() < 0.0).any();
    simplex_dev = std::max(simplex_dev, std::abs(w.sum() - 1.0));

    std::vector<Eigen::Index> perm(static_cast<std::size_t>(rows));
    std::iota(perm.begin(), perm.end(), 0);
    for (std::size_t k = perm.size() - 1; k > 0; --k) std::swap(perm[k], perm[rng.below(k + 1)]);
    Eigen::MatrixXd g(rows, dim);
    for (Eigen::Index r = 0; r < rows; ++r) g.row(r) = f.row(perm[static_cast<std::size_t>(r)]);
    perm_dev = std::max(perm_dev, (tib_aggregate(f, t, pi) - tib_aggregate(g, t, pi)).cwiseAbs().maxCoeff());

    const Eigen::VectorXd mean = f.colwise().mean().transpose();
    high_dev = std::max(high_dev, (tib_aggregate(f, t, kHighTemperature) - mean).cwiseAbs().maxCoeff());
    Eigen::Index best = 0;
    (f * t).maxCoeff(&best);
    low_dev = std::max(low_dev,
                       (tib_aggregate(f, t, kLowTemperature) - f.row(best).transpose()).cwiseAbs().maxCoeff());
  }
  report(high_dev < kTibLimitTol && low_dev < kTibLimitTol && !negative && simplex_dev <= kTibExactTol &&
             perm_dev <= kTibExactTol,
         "tib-limits",
         fmt("%zu instances: high-temp vs mean %.2e, low-temp vs argmax %.2e (tol %.0e); simplex %.1e, "
             "permutation %.1e (tol %.0e)",
             kTibInstances, high_dev, low_dev, kTibLimitTol, simplex_dev, perm_dev, kTibExactTol));
}

void loss_certification() {
  LossCheckOptions opts;  // 20 seeds, B=8, D=16, 1000 Pearson cases
  const auto lines = run_loss_checks(opts);
  bool ok = !lines.empty();
  std::string detail;
  for (const auto& l : lines) {
    ok = ok && l.passed;
    detail += fmt("%s%s %.2e/%.0e", detail.empty() ? "" : "; ", l.name.c_str(), l.measured, l.threshold);
    if (!l.passed) detail += " FAILED";
  }
  // Same inter_loss inputs with a double-precision oracle, for reference only:
  // its difference quotient carries about ulp(L) / eps of rounding noise.
  double plain = 0.0;
  for (std::uint64_t s = 0; s < opts.seeds; ++s) {
    const auto batch = random_batch(1000 + s, opts.batch, opts.dim);
    const auto r = inter_loss(batch, opts.config.temperature);
    const auto f = [&](const Eigen::VectorXd& p) {
      return inter_loss(unflatten(p, opts.batch, opts.dim), opts.config.temperature).value;
    };
    plain = std::max(plain, grad_check(f, flatten(batch), flatten({r.grad_video, r.grad_text}), opts.eps));
  }
  detail += fmt("; [informational] inter_loss with double-precision oracle %.2e", plain);
  report(ok, "loss-certification", detail);
}

void determinism() {
  ::unsetenv("EERCF_THREADS");
  const auto dir = fs::temp_directory_path() / "eercf_acceptance_determinism";
  fs::remove_all(dir);
  testkit::SynthConfig c;
  c.videos = 300;
  c.queries = 300;
  c.dim = 64;
  c.noise = 1.0;
  c.mode = testkit::DistractorMode::PatchNoise;
  const auto data = testkit::generate(c);
  write_gallery(data.videos, data.texts, data.manifest, dir);
  const auto eval = [&](const char* threads) {
    std::ostringstream out, err;
    const int code = cli::run({"eval", "--gallery", (dir / "videos.bin").string(), "--texts",
                               (dir / "texts.bin").string(), "--manifest", (dir / "manifest.json").string(),
                               "--format", "json", "--v2t", "--threads", threads},
                              out, err);
    return std::pair{code, out.str()};
  };
  const auto one = eval("1");
  const auto eight = eval("8");
  const bool ok = one.first == 0 && eight.first == 0 && one.second == eight.second;
  std::string shown = one.second;
  if (!shown.empty() && shown.back() == '\n') shown.pop_back();
  report(ok, "determinism", "eval with 1 and 8 workers: " + std::string(ok ? "identical " : "different ") + shown);
}

}  // namespace

int main() {
  const std::pair<const char*, void (*)()> criteria[] = {
      {"flops-table1", flops_table1},          {"flops-table2", flops_table2},
      {"oracle-equivalence", oracle_equivalence}, {"two-stage-benefit", two_stage_benefit},
      {"topk-noise", topk_noise},              {"tib-limits", tib_limits},
      {"loss-certification", loss_certification}, {"determinism", determinism},
  };
  for (const auto& [name, fn] : criteria) {
    try {
      fn();
    } catch (const std::exception& e) {
      report(false, name, std::string("threw: ") + e.what());
    }
  }
  std::printf("%d of %zu criteria failed\n", failures, std::size(criteria));
  return failures == 0 ? 0 : 1;
}
