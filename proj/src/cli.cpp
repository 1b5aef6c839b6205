#include "eercf/cli.hpp"

#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "eercf/embedding_store.hpp"
#include "eercf/error.hpp"
#include "eercf/flops.hpp"
#include "eercf/losses.hpp"
#include "eercf/parallel.hpp"
#include "eercf/ranking.hpp"
#include "eercf/testkit.hpp"

namespace eercf::cli {

namespace {

struct SearchFlags {
  std::size_t top_k = 50;
  double pi_frame = 0.1;
  double pi_patch = 0.01;
  std::vector<double> weights{5.0, 5.0, 1.0};
  std::size_t threads = 0;

  void add_to(CLI::App* app) {
    app->add_option("--top-k", top_k, "Recall candidates passed to reranking")->capture_default_str();
    app->add_option("--pi-frame", pi_frame, "Frame-level TIB temperature")->capture_default_str();
    app->add_option("--pi-patch", pi_patch, "Patch-level TIB temperature")->capture_default_str();
    app->add_option("--weights", weights, "Fusion weights for coarse,frame,patch similarities")
        ->expected(3)
        ->delimiter(',')
        ->capture_default_str();
    app->add_option("--threads", threads, "Worker count (0 = hardware; capped by EERCF_THREADS)");
  }

  SearchConfig config() const {
    SearchConfig c;
    c.top_k = top_k;
    c.tib = {pi_frame, pi_patch};
    c.weights = {weights.at(0), weights.at(1), weights.at(2)};
    c.validate();
    return c;
  }
};

std::string format_number(double v) { return nlohmann::json(v).dump(); }

std::ofstream open_output(const std::string& path) {
  std::ofstream f(path);
  if (!f) throw Error(ErrorCode::Io, "cannot open for writing: " + path);
  return f;
}

// ---- ingest ---------------------------------------------------------------

struct IngestFlags {
  std::string videos, texts, manifest, json, out;
};

Dataset ingest_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::Io, "cannot open " + path);
  nlohmann::json j;
  try {
    in >> j;
    const auto dim = j.at("dim").get<Eigen::Index>();
    if (dim < 1) throw Error(ErrorCode::ShapeMismatch, "dim must be positive");
    auto read_row = [dim](const nlohmann::json& row, const std::string& what) {
      const auto values = row.get<std::vector<float>>();
      if (static_cast<Eigen::Index>(values.size()) != dim) {
        throw Error(ErrorCode::ShapeMismatch, what + " has " + std::to_string(values.size()) +
                                                  " values, expected " + std::to_string(dim));
      }
      return Eigen::Map<const Eigen::RowVectorXf>(values.data(), dim).eval();
    };

    std::vector<VideoRecord> videos;
    for (const auto& jv : j.at("videos")) {
      VideoRecord v;
      v.id = jv.at("id").get<std::string>();
      const auto& frames = jv.at("frames");
      const auto& patches = jv.at("patches");
      if (frames.empty() || patches.size() != frames.size() || patches.front().empty()) {
        throw Error(ErrorCode::ShapeMismatch, "video '" + v.id + "' needs T >= 1 frames and T patch groups");
      }
      const auto t_count = static_cast<Eigen::Index>(frames.size());
      v.patches_per_frame = static_cast<Eigen::Index>(patches.front().size());
      v.frames.resize(t_count, dim);
      v.patches.resize(t_count * v.patches_per_frame, dim);
      for (Eigen::Index t = 0; t < t_count; ++t) {
        v.frames.row(t) = read_row(frames[t], "frame row");
        if (static_cast<Eigen::Index>(patches[t].size()) != v.patches_per_frame) {
          throw Error(ErrorCode::ShapeMismatch, "video '" + v.id + "' has ragged patch groups");
        }
        for (Eigen::Index p = 0; p < v.patches_per_frame; ++p) {
          v.patches.row(t * v.patches_per_frame + p) = read_row(patches[t][p], "patch row");
        }
      }
      videos.push_back(std::move(v));
    }

    std::vector<TextRecord> texts;
    for (const auto& jt : j.at("texts")) {
      TextRecord t;
      t.id = jt.at("id").get<std::string>();
      t.feature = normalize(read_row(jt.at("feature"), "text feature").transpose().eval());
      if (jt.contains("caption")) t.caption = jt["caption"].get<std::string>();
      texts.push_back(std::move(t));
    }

    Manifest m;
    m.dataset = j.value("dataset", std::string("ingested"));
    m.dim = dim;
    for (const auto& p : j.value("pairs", nlohmann::json::array())) {
      m.pairs.push_back({p.at("text_id").get<std::string>(), p.at("video_id").get<std::string>()});
    }
    Dataset ds{Gallery(std::move(videos)), std::move(texts), std::move(m)};
    validate_dataset(ds.gallery, ds.texts, ds.manifest);
    return ds;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::ShapeMismatch, path + ": " + e.what());
  }
}

int run_ingest(const IngestFlags& f, std::ostream& out) {
  Dataset ds;
  if (!f.json.empty()) {
    ds = ingest_json(f.json);
  } else {
    if (f.videos.empty() || f.texts.empty() || f.manifest.empty()) {
      throw Error(ErrorCode::InvalidParams, "ingest needs --json or all of --videos, --texts, --manifest");
    }
    ds = load_dataset(f.videos, f.texts, f.manifest);
  }
  write_gallery(ds.gallery.videos(), ds.texts, ds.manifest, f.out);
  out << "ingested " << ds.gallery.size() << " videos, " << ds.texts.size() << " texts, "
      << ds.manifest.pairs.size() << " pairs (D=" << ds.manifest.dim << ") into " << f.out << "\n";
  return kExitOk;
}

// ---- search ---------------------------------------------------------------

struct SearchCmd {
  std::string gallery, texts, output;
  std::vector<std::string> text_ids;
  SearchFlags search;
};

int run_search(const SearchCmd& f, std::ostream& out) {
  const SearchConfig config = f.search.config();
  const Gallery gallery = load_gallery(f.gallery);
  const auto texts = load_texts(f.texts);

  std::vector<const TextRecord*> queries;
  if (f.text_ids.empty()) {
    for (const auto& t : texts) queries.push_back(&t);
  } else {
    for (const auto& id : f.text_ids) {
      const auto it = std::find_if(texts.begin(), texts.end(), [&](const TextRecord& t) { return t.id == id; });
      if (it == texts.end()) throw Error(ErrorCode::UnknownId, "text '" + id + "' not found");
      queries.push_back(&*it);
    }
  }

  std::ofstream file;
  if (!f.output.empty()) file = open_output(f.output);
  std::ostream& sink = f.output.empty() ? out : file;

  // Stream in chunks so memory stays bounded; lines keep input order.
  const std::size_t threads = resolve_threads(f.search.threads);
  const std::size_t chunk = std::max<std::size_t>(threads * 8, 1);
  std::vector<RankedList> lists;
  for (std::size_t start = 0; start < queries.size(); start += chunk) {
    const std::size_t n = std::min(chunk, queries.size() - start);
    lists.assign(n, {});
    parallel_for(n, threads, [&](std::size_t i) {
      lists[i] = search(queries[start + i]->feature, gallery, config);
    });
    for (std::size_t i = 0; i < n; ++i) sink << ranked_list_to_json(queries[start + i]->id, lists[i]).dump() << "\n";
  }
  sink.flush();
  if (!sink) throw Error(ErrorCode::Io, "failed writing search output");
  return kExitOk;
}

// ---- eval -----------------------------------------------------------------

struct EvalCmd {
  std::string gallery, texts, manifest, format = "text";
  bool video_to_text = false;
  SearchFlags search;
};

void print_metrics(std::ostream& out, const std::string& title, const Metrics& m) {
  out << title << " (" << m.queries << " queries)\n";
  out << "R@1   " << format_number(m.r_at_1) << "\n";
  out << "R@5   " << format_number(m.r_at_5) << "\n";
  out << "R@10  " << format_number(m.r_at_10) << "\n";
  out << "Mean  " << format_number(m.mean) << "\n";
}

int run_eval(const EvalCmd& f, std::ostream& out) {
  const SearchConfig config = f.search.config();
  const Dataset ds = load_dataset(f.gallery, f.texts, f.manifest);
  const std::size_t threads = resolve_threads(f.search.threads);
  const Metrics t2v = evaluate(ds.texts, ds.manifest.pairs, ds.gallery, config, threads);
  std::optional<Metrics> v2t;
  if (f.video_to_text) v2t = evaluate_video_to_text(ds.texts, ds.manifest.pairs, ds.gallery, config, threads);

  if (f.format == "json") {
    nlohmann::json j = metrics_to_json(t2v);
    j["top_k"] = config.top_k;
    if (v2t) j["v2t"] = metrics_to_json(*v2t);
    out << j.dump() << "\n";
  } else {
    print_metrics(out, "t2v", t2v);
    if (v2t) print_metrics(out, "v2t", *v2t);
  }
  return kExitOk;
}

// ---- flops ----------------------------------------------------------------

struct FlopsCmd {
  std::string method, preset, format = "text";
  std::optional<std::uint64_t> n, nv, nt, np, nr, d;
};

int run_flops(const FlopsCmd& f, std::ostream& out) {
  std::vector<flops::Entry> entries;
  flops::CostModelInput base;
  if (!f.preset.empty()) {
    entries = flops::preset(f.preset);
    base = entries.back().input;
  }
  auto apply = [&](flops::CostModelInput& in) {
    if (f.n) in.gallery_size = *f.n;
    if (f.nv) in.frames = *f.nv;
    if (f.nt) in.words = *f.nt;
    if (f.np) in.patches = *f.np;
    if (f.nr) in.candidates = *f.nr;
    if (f.d) in.dim = *f.d;
  };
  if (!f.method.empty()) {
    const auto kind = flops::parse_method(f.method);
    if (!kind) throw Error(ErrorCode::InvalidParams, "unknown method '" + f.method + "'");
    apply(base);
    entries = {{std::string(flops::to_string(*kind)), *kind, base}};
  } else if (entries.empty()) {
    throw Error(ErrorCode::InvalidParams, "flops needs --method or --preset");
  } else {
    for (auto& e : entries) apply(e.input);
  }
  const auto rows = flops::flops_table(entries);
  if (f.format == "json") {
    out << flops::table_to_json(rows).dump() << "\n";
  } else {
    out << flops::table_to_text(rows);
  }
  return kExitOk;
}

// ---- synth ----------------------------------------------------------------

struct SynthCmd {
  testkit::SynthConfig config;
  std::string mode = "none";
  std::string out;
};

int run_synth(SynthCmd f, std::ostream& out) {
  const auto mode = testkit::parse_mode(f.mode);
  if (!mode) throw Error(ErrorCode::InvalidConfig, "unknown mode '" + f.mode + "'");
  f.config.mode = *mode;
  const auto data = testkit::generate(f.config);
  write_gallery(data.videos, data.texts, data.manifest, f.out);
  out << "wrote " << data.videos.size() << " videos, " << data.texts.size() << " texts to " << f.out << "\n";
  return kExitOk;
}

// ---- losscheck ------------------------------------------------------------

struct LossCheckCmd {
  LossCheckOptions options;
  std::string format = "text";
};

int run_losscheck(const LossCheckCmd& f, std::ostream& out) {
  const auto lines = run_loss_checks(f.options);
  bool ok = true;
  for (const auto& l : lines) ok = ok && l.passed;
  if (f.format == "json") {
    auto j = nlohmann::json::array();
    for (const auto& l : lines) {
      j.push_back({{"check", l.name}, {"measured", l.measured}, {"threshold", l.threshold}, {"passed", l.passed}});
    }
    out << nlohmann::json{{"checks", j}, {"passed", ok}}.dump() << "\n";
  } else {
    for (const auto& l : lines) {
      char buf[256];
      std::snprintf(buf, sizeof(buf), "%-4s  %-48s  measured=%-12.4g threshold=%g\n", l.passed ? "PASS" : "FAIL",
                    l.name.c_str(), l.measured, l.threshold);
      out << buf;
    }
  }
  return ok ? kExitOk : kExitValidation;
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Two-stage multi-granularity text-to-video retrieval engine", "eercf"};
  app.require_subcommand(1);

  IngestFlags ingest;
  auto* ingest_cmd = app.add_subcommand("ingest", "Validate embeddings and rewrite them as the binary container");
  ingest_cmd->add_option("--videos", ingest.videos, "Input videos.bin");
  ingest_cmd->add_option("--texts", ingest.texts, "Input texts.bin");
  ingest_cmd->add_option("--manifest", ingest.manifest, "Input manifest.json");
  ingest_cmd->add_option("--json", ingest.json, "Input JSON document with videos, texts, pairs");
  ingest_cmd->add_option("--out", ingest.out, "Output directory")->required();

  SearchCmd search_flags;
  auto* search_cmd = app.add_subcommand("search", "Rank the gallery for one or more texts (JSON lines)");
  search_cmd->add_option("--gallery", search_flags.gallery, "videos.bin")->required();
  search_cmd->add_option("--texts", search_flags.texts, "texts.bin")->required();
  search_cmd->add_option("--text-id", search_flags.text_ids, "Query text id (repeatable; default all)");
  search_cmd->add_option("--out", search_flags.output, "Write JSON lines here instead of stdout");
  search_flags.search.add_to(search_cmd);

  EvalCmd eval_flags;
  auto* eval_cmd = app.add_subcommand("eval", "Recall@K metrics over the manifest ground truth");
  eval_cmd->add_option("--gallery", eval_flags.gallery, "videos.bin")->required();
  eval_cmd->add_option("--texts", eval_flags.texts, "texts.bin")->required();
  eval_cmd->add_option("--manifest", eval_flags.manifest, "manifest.json")->required();
  eval_cmd->add_option("--format", eval_flags.format)->check(CLI::IsMember({"text", "json"}));
  eval_cmd->add_flag("--v2t", eval_flags.video_to_text, "Also report video-to-text metrics");
  eval_flags.search.add_to(eval_cmd);

  FlopsCmd flops_flags;
  auto* flops_cmd = app.add_subcommand("flops", "Analytic per-pair similarity cost");
  flops_cmd->add_option("--method", flops_flags.method, "single|segment|cross|wordframe|pooled|twostage");
  flops_cmd->add_option("--preset", flops_flags.preset)
      ->check(CLI::IsMember({"msrvtt1k", "msrvtt3k", "vatex", "activitynet"}));
  flops_cmd->add_option("--N", flops_flags.n, "Gallery size");
  flops_cmd->add_option("--Nv", flops_flags.nv, "Frames (segments) per video");
  flops_cmd->add_option("--Nt", flops_flags.nt, "Words per text");
  flops_cmd->add_option("--Np", flops_flags.np, "Patches per video");
  flops_cmd->add_option("--Nr", flops_flags.nr, "Rerank candidates");
  flops_cmd->add_option("--D", flops_flags.d, "Embedding dimension");
  flops_cmd->add_option("--format", flops_flags.format)->check(CLI::IsMember({"text", "json"}));

  SynthCmd synth_flags;
  auto* synth_cmd = app.add_subcommand("synth", "Write a synthetic gallery with planted relevance");
  synth_cmd->add_option("--videos", synth_flags.config.videos)->capture_default_str();
  synth_cmd->add_option("--queries", synth_flags.config.queries)->capture_default_str();
  synth_cmd->add_option("--dim", synth_flags.config.dim)->capture_default_str();
  synth_cmd->add_option("--frames", synth_flags.config.frames)->capture_default_str();
  synth_cmd->add_option("--patches", synth_flags.config.patches_per_frame, "Patches per frame")->capture_default_str();
  synth_cmd->add_option("--seed", synth_flags.config.seed)->capture_default_str();
  synth_cmd->add_option("--noise", synth_flags.config.noise, "Query noise norm")->capture_default_str();
  synth_cmd->add_option("--mode", synth_flags.mode)
      ->check(CLI::IsMember({"none", "coarse-confusable", "patch-noise"}))
      ->capture_default_str();
  synth_cmd->add_option("--out", synth_flags.out, "Output directory")->required();

  LossCheckCmd loss_flags;
  auto* loss_cmd = app.add_subcommand("losscheck", "Certify loss gradients and Pearson properties");
  loss_cmd->add_option("--seeds", loss_flags.options.seeds)->capture_default_str();
  loss_cmd->add_option("--batch", loss_flags.options.batch)->capture_default_str();
  loss_cmd->add_option("--dim", loss_flags.options.dim)->capture_default_str();
  loss_cmd->add_option("--eps", loss_flags.options.eps)->capture_default_str();
  loss_cmd->add_option("--tau", loss_flags.options.config.temperature)->capture_default_str();
  loss_cmd->add_option("--alpha", loss_flags.options.config.alpha)->capture_default_str();
  loss_cmd->add_option("--beta", loss_flags.options.config.beta)->capture_default_str();
  loss_cmd->add_option("--format", loss_flags.format)->check(CLI::IsMember({"text", "json"}));

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitValidation;
  }

  try {
    if (*ingest_cmd) return run_ingest(ingest, out);
    if (*search_cmd) return run_search(search_flags, out);
    if (*eval_cmd) return run_eval(eval_flags, out);
    if (*flops_cmd) return run_flops(flops_flags, out);
    if (*synth_cmd) return run_synth(synth_flags, out);
    if (*loss_cmd) return run_losscheck(loss_flags, out);
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return e.code() == ErrorCode::Io ? kExitIo : kExitValidation;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitValidation;
  }
  return kExitValidation;
}

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  std::vector<const char*> argv;
  argv.push_back("eercf");
  for (const auto& a : args) argv.push_back(a.c_str());
  return run(static_cast<int>(argv.size()), argv.data(), out, err);
}

}  // namespace eercf::cli
