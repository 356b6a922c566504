#pragma once

#include <csignal>
#include <cstdlib>
#include <iostream>
#include <memory>
#include <optional>
#include <pthread.h>
#include <set>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>

#include "soda/hpo/tpe.hpp"
#include "soda/ingestion/dataset.hpp"
#include "soda/ingestion/synthetic.hpp"
#include "soda/llm/mock_responder.hpp"
#include "soda/metrics/baselines.hpp"
#include "soda/metrics/eval.hpp"
#include "soda/service/api.hpp"

namespace soda::service {

/// Thrown for bad flag combinations found after parsing; exit code 2.
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

inline std::string env_or(const char* name, std::string fallback) {
  const char* v = std::getenv(name);
  return v && *v ? std::string(v) : std::move(fallback);
}

inline std::unique_ptr<llm::LlmBackend> make_backend(const std::string& kind, const fs::path& audit_log = {}) {
  if (kind == "mock") return llm::make_offline_mock();
  if (kind == "remote") {
    auto cfg = llm::RemoteChatConfig::from_env();
    if (cfg.url.empty()) throw UsageError("--backend remote needs SODA_LLM_URL");
    cfg.audit_log = audit_log;
    return llm::make_remote_chat(std::move(cfg));
  }
  throw UsageError("--backend must be mock or remote, got '" + kind + "'");
}

inline std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : s + ",") {
    if (c == ',') {
      const auto t = llm::detail::trim(cur);
      if (!t.empty()) out.push_back(t);
      cur.clear();
    } else {
      cur += c;
    }
  }
  return out;
}

struct TrainOptions {
  int epochs = 20;
  double learning_rate = 0.05;
  int batch_size = 32;
  int d_proj = 64;
  double dropout = 0.1;
  std::uint64_t seed = 0;
  std::uint64_t split_seed = 0;
  int hpo_trials = 0;
};

/// Model config and SGD config for one hyperparameter assignment.
inline std::pair<nn::FusionConfig, nn::TrainConfig> configs_for(const TrainOptions& o, const hpo::Config& c = {}) {
  nn::FusionConfig fc;
  nn::TrainConfig tc;
  fc.d_proj = o.d_proj;
  fc.encoder.dropout = o.dropout;
  tc.epochs = o.epochs;
  tc.learning_rate = o.learning_rate;
  tc.batch_size = o.batch_size;
  tc.seed = o.seed;
  if (auto it = c.find("learning_rate"); it != c.end()) tc.learning_rate = it->second.get<double>();
  if (auto it = c.find("batch_size"); it != c.end()) tc.batch_size = it->second.get<int>();
  if (auto it = c.find("d_proj"); it != c.end()) fc.d_proj = it->second.get<int>();
  if (auto it = c.find("dropout"); it != c.end()) fc.encoder.dropout = it->second.get<double>();
  return {fc, tc};
}

/// Trains on a corpus (optionally after a TPE search scored by negated
/// validation macro-F1) and returns the model with its training metadata.
inline nn::CtrModel train_on_corpus(const CorpusManifest& manifest, const std::vector<AdRecord>& records,
                                    const TrainOptions& o, std::ostream& log) {
  DatasetOptions dopt;
  dopt.split_seed = o.split_seed;
  const auto ds = prepare_dataset(manifest, records, dopt);
  const nn::ModelSetup base{nn::FusionConfig{}, ds.vocab, manifest.schema, ds.thresholds};
  hpo::Config best;
  json hpo_meta = nullptr;
  if (o.hpo_trials > 0) {
    require(!ds.split.val.empty(), ErrorCode::EmptyDataset, "HPO needs a non-empty validation split");
    hpo::TpeConfig tcfg;
    tcfg.seed = o.seed;
    int trial = 0;
    const auto result = hpo::optimize(
        [&](const hpo::Config& c) {
          auto [fc, tc] = configs_for(o, c);
          nn::ModelSetup setup = base;
          setup.config = fc;
          const auto m = nn::train_fusion(ds.split.train, setup, tc).model;
          const double f1 = evaluate_model(m, ds.split.val).macro_f1_all;
          log << "trial " << trial++ << ": val macro-F1 " << f1 << "\n";
          return -f1;
        },
        hpo::default_search_space(), o.hpo_trials, tcfg);
    best = result.best.config;
    hpo_meta = {{"trials", o.hpo_trials}, {"best", hpo::to_json(result.best)}};
    json hist = json::array();
    for (const auto& t : result.history) hist.push_back(hpo::to_json(t));
    hpo_meta["history"] = hist;
  }
  auto [fc, tc] = configs_for(o, best);
  nn::ModelSetup setup = base;
  setup.config = fc;
  auto model = nn::train_fusion(ds.split.train, setup, tc).model;
  model.training["corpus_id"] = manifest.corpus_id;
  model.training["split_seed"] = o.split_seed;
  model.training["split_ratios"] = dopt.split_ratios;
  model.training["rows"] = {{"train", ds.split.train.size()}, {"val", ds.split.val.size()}, {"test", ds.split.test.size()}};
  if (!hpo_meta.is_null()) model.training["hpo"] = hpo_meta;
  return model;
}

/// Test rows for a model: the corpus is re-split with the model's split
/// seed, and rows are expanded with the model's own vocabulary and labels.
struct EvalData {
  PreparedDataset dataset;
  std::vector<TrainingRow> test;
};

inline EvalData eval_data(const CorpusManifest& manifest, const std::vector<AdRecord>& records, const nn::CtrModel& m) {
  DatasetOptions dopt;
  dopt.split_seed = m.training.value("split_seed", std::uint64_t{0});
  if (m.training.contains("split_ratios")) dopt.split_ratios = m.training["split_ratios"].get<std::array<double, 3>>();
  EvalData out{prepare_dataset(manifest, records, dopt), {}};
  std::set<std::string> test_ads;
  for (const auto& r : out.dataset.split.test) test_ads.insert(r.source_ad_id);
  const auto ctx = m.preprocess_context(manifest.resolved_images());
  for (const auto& r : records) {
    if (!test_ads.count(r.ad_id)) continue;
    for (auto& row : expand_creative(r, bucketize(*r.observed_ctr, m.thresholds), ctx)) out.test.push_back(std::move(row));
  }
  return out;
}

inline json eval_report(const CorpusManifest& manifest, const std::vector<AdRecord>& records, const nn::CtrModel& m,
                        bool baselines, int knn_k = 5) {
  const auto data = eval_data(manifest, records, m);
  json report = to_json(evaluate_model(m, data.test));
  report["model_id"] = nn::model_id(m);
  report["corpus_id"] = manifest.corpus_id;
  if (baselines) {
    const auto& train = data.dataset.split.train;
    const auto& test = data.dataset.split.test;
    const auto ff = FlatFeatures::fit(train, data.dataset.vocab.size(), manifest.schema.categorical_vocab_sizes());
    nn::TrainConfig tc;
    if (m.training.contains("train_config")) tc = m.training["train_config"].get<nn::TrainConfig>();
    const MlpPredictor mlp(train, ff, tc);
    const KnnPredictor knn(train, knn_k, ff);
    report["baselines"] = {{"mlp", to_json(evaluate_model(mlp, test))},
                           {"knn", to_json(evaluate_model(knn, test))}};
  }
  return report;
}

inline json score_json(const AdRecord& ad, const std::string& model_name, const nn::CtrModel& m,
                       const PreprocessContext& ctx) {
  const auto r = m.predict_ad(ad, ctx);
  json probs = json::object();
  for (auto c : kAllClasses) probs[std::string(to_string(c))] = r.probabilities[static_cast<std::size_t>(index_of(c))];
  return {{"ad_id", ad.ad_id},
          {"model", model_name},
          {"model_id", nn::model_id(m)},
          {"probabilities", probs},
          {"predicted_class", to_string(r.predicted_class)}};
}

/// Blocks until SIGINT or SIGTERM, then runs on_signal.
inline void wait_for_shutdown(const std::function<void()>& on_signal) {
  sigset_t set;
  sigemptyset(&set);
  sigaddset(&set, SIGINT);
  sigaddset(&set, SIGTERM);
  int sig = 0;
  sigwait(&set, &sig);
  on_signal();
}

/// Runs the CLI. Exit 0 on success, 1 on domain errors, 2 on usage errors.
inline int cli_main(int argc, char** argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  CLI::App app{"Creative CTR prediction, attention heatmaps and LLM campaign analysis", "soda"};
  app.require_subcommand(1);
  app.fallthrough();  // --store/--templates also accepted after the subcommand
  std::string store_path = env_or("SODA_STORE", "soda_store");
  std::string templates;
  app.add_option("--store", store_path, "Store directory (env SODA_STORE)");
  app.add_option("--templates", templates, "Prompt template directory (env SODA_TEMPLATES)");
  auto store = [&] { return Store(store_path); };
  auto template_set = [&] { return llm::TemplateSet::load(llm::template_dir(templates)); };

  // ingest
  auto* ingest = app.add_subcommand("ingest", "Copy a corpus into the store");
  std::string manifest_path;
  ingest->add_option("--manifest", manifest_path, "Corpus manifest.json")->required();
  ingest->callback([&] {
    const auto manifest = read_manifest(manifest_path);
    auto s = store();
    const auto added = s.ingest(manifest, load_corpus(manifest));
    out << json{{"corpus_id", manifest.corpus_id}, {"added", added}, {"ads", s.ad_count()}}.dump() << "\n";
  });

  // synth
  auto* synth = app.add_subcommand("synth", "Write a synthetic corpus");
  SyntheticSpec spec;
  std::string synth_out;
  synth->add_option("--n", spec.n_ads, "Number of ads")->required();
  synth->add_option("--seed", spec.seed, "Generator seed");
  synth->add_option("--brands", spec.n_brands, "Number of brands");
  synth->add_option("--image-size", spec.image_size, "Frame size in pixels");
  synth->add_option("--out", synth_out, "Output directory")->required();
  synth->callback([&] {
    const auto path = write_corpus(generate_synthetic(spec), synth_out);
    out << path.string() << "\n";
  });

  // train
  auto* train = app.add_subcommand("train", "Train a fusion model and save it to the store");
  std::string corpus_path, model_name = "default";
  TrainOptions topt;
  train->add_option("--corpus", corpus_path, "Corpus manifest.json")->required();
  train->add_option("--model", model_name, "Model name under models/");
  train->add_option("--epochs", topt.epochs, "SGD epochs");
  train->add_option("--lr", topt.learning_rate, "Learning rate");
  train->add_option("--batch-size", topt.batch_size, "Batch size");
  train->add_option("--d-proj", topt.d_proj, "Fusion projection width");
  train->add_option("--dropout", topt.dropout, "Dropout rate");
  train->add_option("--seed", topt.seed, "Initialization, shuffling and HPO seed");
  train->add_option("--split-seed", topt.split_seed, "Ad-level split seed");
  train->add_option("--hpo", topt.hpo_trials, "Run this many TPE trials first");
  train->callback([&] {
    const auto manifest = read_manifest(corpus_path);
    const auto model = train_on_corpus(manifest, load_corpus(manifest), topt, err);
    auto s = store();
    s.save_model(model, model_name);
    out << json{{"model", model_name}, {"model_id", nn::model_id(model)}, {"path", s.model_dir(model_name).string()},
                {"final_loss", model.training["history"].back()}}
               .dump()
        << "\n";
  });

  // eval
  auto* eval = app.add_subcommand("eval", "Evaluate a stored model on its test split");
  std::string eval_out;
  bool with_baselines = false;
  eval->add_option("--corpus", corpus_path, "Corpus manifest.json")->required();
  eval->add_option("--model", model_name, "Model name");
  eval->add_option("--out", eval_out, "Report path")->required();
  eval->add_flag("--baselines", with_baselines, "Also train and evaluate the MLP and kNN baselines");
  eval->callback([&] {
    const auto manifest = read_manifest(corpus_path);
    auto s = store();
    const auto report = eval_report(manifest, load_corpus(manifest), *s.model(model_name), with_baselines);
    write_atomic(eval_out, report.dump(2) + "\n");
    out << json{{"macro_f1_all", report["macro_f1_all"]}, {"out", eval_out}}.dump() << "\n";
  });

  // score
  auto* score = app.add_subcommand("score", "Score a stored ad or a record JSON file");
  std::string ad_ref;
  score->add_option("--ad", ad_ref, "Ad id in the store, or path to a record JSON")->required();
  score->add_option("--model", model_name, "Model name");
  score->callback([&] {
    auto s = store();
    const auto m = s.model(model_name);
    auto ctx = m->preprocess_context(s.images_dir());
    AdRecord ad;
    if (auto stored = s.get_ad(ad_ref)) {
      ad = *stored;
    } else if (fs::is_regular_file(ad_ref)) {
      ad = ad_from_json(json::parse(read_text(ad_ref)));
      const fs::path local = fs::path(ad_ref).parent_path();
      const fs::path images = s.images_dir();
      ctx.load_frame = [local, images](const std::string& ref) {
        return fs::is_regular_file(images / ref) ? read_png(images / ref) : read_png(local / ref);
      };
      validate_ad(ad, m->schema);
    } else {
      fail(ErrorCode::NotFound, "no stored ad or record file '" + ad_ref + "'");
    }
    out << score_json(ad, model_name, *m, ctx).dump() << "\n";
  });

  // heatmap
  auto* heat = app.add_subcommand("heatmap", "Export the attention overlay for a stored ad");
  double alpha = 0.5;
  int frame = 0;
  std::string heat_out, colormap = "blue_red";
  heat->add_option("--ad", ad_ref, "Ad id in the store")->required();
  heat->add_option("--model", model_name, "Model name");
  heat->add_option("--alpha", alpha, "Overlay opacity in [0,1]");
  heat->add_option("--frame", frame, "Frame index");
  heat->add_option("--colormap", colormap, "blue_red or gray");
  heat->add_option("--out", heat_out, "Output prefix; writes <out>.png and <out>.json")->required();
  heat->callback([&] {
    auto s = store();
    const auto ad = s.get_ad(ad_ref);
    if (!ad) fail(ErrorCode::NotFound, "unknown ad '" + ad_ref + "'");
    const auto m = s.model(model_name);
    const auto h = viz::ad_heatmap(*m, *ad, m->preprocess_context(s.images_dir()), frame, alpha,
                                   viz::parse_colormap(colormap));
    const auto files = viz::export_heatmap(h.overlay, h.map, heat_out, nn::model_id(*m), ad->ad_id);
    out << json{{"image", files.image.string()}, {"sidecar", files.sidecar.string()}}.dump() << "\n";
  });

  // analyze
  auto* analyze = app.add_subcommand("analyze", "LLM insight extraction and brand analyses");
  std::string kind, backend_kind = "mock", analyze_out, brand, brands, timestamp;
  int retries = 2, workers = 4;
  std::vector<std::string> interest_sets;
  analyze->add_option("--kind", kind, "extraction, brand_persona, comparative or campaign")
      ->required()
      ->check(CLI::IsMember({"extraction", "brand_persona", "comparative", "campaign"}));
  analyze->add_option("--corpus", corpus_path, "Corpus manifest.json (default: the store's ads)");
  analyze->add_option("--brand", brand, "Brand for brand_persona");
  analyze->add_option("--brands", brands, "Comma-separated brands (default: all)");
  analyze->add_option("--backend", backend_kind, "mock or remote");
  analyze->add_option("--retries", retries, "Repair retries per call");
  analyze->add_option("--workers", workers, "Concurrent extraction calls");
  analyze->add_option("--interest-set", interest_sets, "Comma-separated interests for one campaign persona (repeatable)");
  analyze->add_option("--timestamp", timestamp, "Fixed generated_at for reproducible reports");
  analyze->add_option("--out", analyze_out, "Output directory")->required();
  analyze->callback([&] {
    std::vector<AdRecord> ads;
    if (!corpus_path.empty()) {
      ads = load_corpus(read_manifest(corpus_path));
    } else {
      ads = store().ads();
    }
    auto selected = split_list(brands);
    if (kind == "brand_persona") {
      if (brand.empty()) throw UsageError("--kind brand_persona needs --brand");
      selected = {brand};
    }
    if (!selected.empty()) {
      std::vector<AdRecord> keep;
      for (auto& a : ads) {
        if (std::find(selected.begin(), selected.end(), a.creative.brand) != selected.end()) keep.push_back(std::move(a));
      }
      ads = std::move(keep);
    }
    require(!ads.empty(), ErrorCode::PreconditionFailed, "no ads match the requested brands");
    fs::create_directories(analyze_out);
    const auto backend = make_backend(backend_kind, fs::path(analyze_out) / "llm_audit.jsonl");
    const auto tpls = template_set();
    const auto clock = timestamp.empty() ? llm::system_clock() : llm::fixed_clock(timestamp);
    const fs::path dir = analyze_out;
    if (kind == "campaign") {
      llm::MockImageBackend images;
      llm::CampaignAnalysisOptions copt;
      copt.max_retries = retries;
      copt.workers = workers;
      copt.clock = clock;
      for (const auto& set : interest_sets) copt.interest_sets.push_back(split_list(set));
      const auto a = llm::run_campaign_analysis(ads, *backend, images, tpls, copt, dir);
      out << json{{"insights", a.insights.size()}, {"brand_reports", a.brand_reports.size()},
                  {"comparative", a.comparative.has_value()}, {"personas", a.personas.size()}}
                 .dump()
          << "\n";
      return;
    }
    const auto insights = llm::extract_all(ads, *backend, tpls.ad_insight, retries, workers);
    llm::insights_to_table(insights, dir / "insights.csv");
    if (kind == "brand_persona") {
      const auto r = llm::brand_persona_analysis(brand, insights, *backend, tpls.brand_persona, clock);
      fs::create_directories(dir / "brand_persona");
      write_atomic(dir / "brand_persona" / (brand + ".json"), to_json(r).dump(2) + "\n");
    } else if (kind == "comparative") {
      const auto r = llm::comparative_analysis(llm::group_by_brand(ads, insights), *backend, tpls.comparative, clock);
      write_atomic(dir / "comparative.json", to_json(r).dump(2) + "\n");
    }
    out << json{{"kind", kind}, {"insights", insights.size()}, {"out", dir.string()}}.dump() << "\n";
  });

  // persona
  auto* persona = app.add_subcommand("persona", "Generate a user persona with an image");
  std::string interests, persona_out = "persona_out";
  persona->add_option("--interests", interests, "Comma-separated interests")->required();
  persona->add_option("--backend", backend_kind, "mock or remote");
  persona->add_option("--timestamp", timestamp, "Fixed generated_at for reproducible output");
  persona->add_option("--out", persona_out, "Output directory");
  persona->callback([&] {
    const auto list = split_list(interests);
    if (list.empty()) throw UsageError("--interests needs at least one interest");
    fs::create_directories(persona_out);
    const auto backend = make_backend(backend_kind, fs::path(persona_out) / "llm_audit.jsonl");
    llm::MockImageBackend images;
    const auto p = llm::persona_with_image(list, *backend, images, template_set(), llm::default_few_shot_examples(),
                                           fs::path(persona_out) / "images",
                                           timestamp.empty() ? llm::system_clock() : llm::fixed_clock(timestamp));
    write_atomic(fs::path(persona_out) / "persona.json", to_json(p).dump(2) + "\n");
    out << to_json(p).dump() << "\n";
  });

  // serve
  auto* serve = app.add_subcommand("serve", "Run the HTTP API");
  int port = std::atoi(env_or("SODA_PORT", "8080").c_str());
  std::string host = "127.0.0.1";
  serve->add_option("--port", port, "Listen port (env SODA_PORT; 0 picks a free port)");
  serve->add_option("--host", host, "Listen address");
  serve->add_option("--backend", backend_kind, "mock or remote");
  serve->add_option("--workers", workers, "Concurrent extraction calls per job");
  serve->callback([&] {
    // Signals go to the waiting thread only.
    sigset_t set;
    sigemptyset(&set);
    sigaddset(&set, SIGINT);
    sigaddset(&set, SIGTERM);
    pthread_sigmask(SIG_BLOCK, &set, nullptr);

    Store s(store_path);
    const auto backend = make_backend(backend_kind, s.root() / "llm_audit.jsonl");
    llm::MockImageBackend images;
    AnalysisContext ctx(s, *backend, images, template_set());
    ctx.workers = workers;
    JobExecutor jobs(s.jobs_dir(), [&](const JobState& j) { return run_analysis(ctx, j); });
    ApiServer api(s, jobs, ctx);
    int bound = port;
    if (port == 0) {
      bound = api.bind_any_port(host);
      if (bound < 0) fail(ErrorCode::IoError, "cannot bind " + host);
    } else if (!api.bind(host, port)) {
      fail(ErrorCode::IoError, "cannot bind " + host + ":" + std::to_string(port));
    }
    jobs.start();
    out << json{{"listening", host + ":" + std::to_string(bound)}}.dump() << std::endl;
    std::thread waiter([&] { wait_for_shutdown([&] { api.stop(); }); });
    api.listen_after_bind();
    jobs.stop();
    // listen_after_bind can also return on its own; wake the waiter.
    pthread_kill(waiter.native_handle(), SIGTERM);
    waiter.join();
  });

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    app.exit(e, out, err);
    err << app.help();
    return 2;
  } catch (const UsageError& e) {
    err << "usage error: " << e.what() << "\n";
    return 2;
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}

}  // namespace soda::service
