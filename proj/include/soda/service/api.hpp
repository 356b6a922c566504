#pragma once

#include <atomic>
#include <cstdio>
#include <map>
#include <mutex>
#include <string>

#include <nlohmann/json.hpp>

#include "soda/service/analysis.hpp"
#include "soda/viz/heatmap.hpp"
#include "soda/llm/remote_http.hpp"

namespace soda::service {

/// Thrown inside handlers for responses with a specific status and code.
struct ApiException : std::runtime_error {
  int status;
  std::string code;
  ApiException(int s, std::string c, const std::string& message)
      : std::runtime_error(message), status(s), code(std::move(c)) {}
};

/// Body of every non-2xx response.
inline json api_error_body(int status, const std::string& code, const std::string& message,
                           const std::string& request_id) {
  return {{"status", status}, {"code", code}, {"message", message}, {"request_id", request_id}};
}

/// True when `j` has exactly the ApiError fields with the right types.
inline bool is_api_error(const json& j) {
  return j.is_object() && j.size() == 4 && j.contains("status") && j["status"].is_number_integer() &&
         j.contains("code") && j["code"].is_string() && !j["code"].get<std::string>().empty() &&
         j.contains("message") && j["message"].is_string() && j.contains("request_id") && j["request_id"].is_string();
}

/// HTTP status and code for a domain error.
inline std::pair<int, std::string> classify(const Error& e) {
  switch (e.code()) {
    case ErrorCode::NotFound: return {404, "NOT_FOUND"};
    case ErrorCode::Conflict: return {409, "DUPLICATE_JOB"};
    case ErrorCode::MissingField:
    case ErrorCode::CtrOutOfRange:
    case ErrorCode::SchemaMismatch:
    case ErrorCode::UnresolvableImage:
    case ErrorCode::PreprocessFailure:
    case ErrorCode::IdOutOfRange:
    case ErrorCode::ParseError:
    case ErrorCode::ShapeMismatch: return {422, "VALIDATION_FAILED"};
    case ErrorCode::InvalidArgument:
    case ErrorCode::DimensionError:
    case ErrorCode::PreconditionFailed: return {422, "INVALID_ARGUMENT"};
    case ErrorCode::ExtractionFailed:
    case ErrorCode::AnalysisFailed:
    case ErrorCode::UnknownAdReference:
    case ErrorCode::UnknownBrand:
    case ErrorCode::BackendError:
    case ErrorCode::ImageBackendError: return {502, "ANALYSIS_FAILED"};
    default: return {500, "INTERNAL"};
  }
}

struct ApiOptions {
  std::string default_model = "default";
};

/// Routes:
///   POST /api/ads                      store an ad (JSON record, optional frames_base64)
///   GET  /api/ads/{id}                 stored record
///   POST /api/score[?persist=true]     {model?, ad_id} or {model?, ad, frames_base64?}
///   GET  /api/ads/{id}/heatmap         ?model&alpha=0.5&frame=0&format=json|png&colormap
///   POST /api/analyses                 {kind, params} -> 202 job
///   GET  /api/analyses/{id}            job state, with the report inlined when done
///   POST /api/personas                 {interests, few_shot?} -> persona
///   GET  /api/insights                 the store's insight table as JSON records
///   GET  /api/images/{name}            stored PNG (frames and persona images)
///   GET  /api/health
class ApiServer {
 public:
  ApiServer(Store& store, JobExecutor& jobs, AnalysisContext& analysis, ApiOptions opt = {})
      : store_(store), jobs_(jobs), analysis_(analysis), opt_(std::move(opt)) {
    routes();
  }

  httplib::Server& server() { return server_; }

  /// Binds an ephemeral port on host and returns it.
  int bind_any_port(const std::string& host = "127.0.0.1") { return server_.bind_to_any_port(host); }
  bool bind(const std::string& host, int port) { return server_.bind_to_port(host, port); }
  bool listen_after_bind() { return server_.listen_after_bind(); }
  void stop() { server_.stop(); }
  void wait_until_ready() { server_.wait_until_ready(); }

 private:
  using Handler = std::function<void(const httplib::Request&, httplib::Response&)>;

  static std::string request_id(const httplib::Response& res) { return res.get_header_value("X-Request-Id"); }

  static void send_json(httplib::Response& res, int status, const json& body) {
    res.status = status;
    res.set_content(body.dump(), "application/json");
  }

  static void send_error(httplib::Response& res, int status, const std::string& code, const std::string& message) {
    send_json(res, status, api_error_body(status, code, message, request_id(res)));
  }

  /// Maps every exception from a handler onto an ApiError response.
  static Handler guarded(Handler h) {
    return [h = std::move(h)](const httplib::Request& req, httplib::Response& res) {
      try {
        h(req, res);
      } catch (const ApiException& e) {
        send_error(res, e.status, e.code, e.what());
      } catch (const Error& e) {
        const auto [status, code] = classify(e);
        send_error(res, status, code, e.what());
      } catch (const json::exception& e) {
        send_error(res, 400, "BAD_REQUEST", std::string("malformed JSON: ") + e.what());
      } catch (const std::exception& e) {
        send_error(res, 500, "INTERNAL", e.what());
      }
    };
  }

  static json parse_body(const httplib::Request& req) {
    try {
      return json::parse(req.body);
    } catch (const json::exception& e) {
      throw ApiException(400, "BAD_REQUEST", std::string("request body is not JSON: ") + e.what());
    }
  }

  std::shared_ptr<const nn::CtrModel> model(const std::string& name) {
    try {
      return store_.model(name);
    } catch (const Error& e) {
      if (e.code() == ErrorCode::NotFound || e.code() == ErrorCode::InvalidArgument) {
        throw ApiException(404, "UNKNOWN_MODEL", "unknown model '" + name + "'");
      }
      throw;
    }
  }

  std::string model_id(const std::string& name, const nn::CtrModel& m) {
    std::lock_guard lock(id_mu_);
    auto it = model_ids_.find(name);
    if (it == model_ids_.end()) it = model_ids_.emplace(name, nn::model_id(m)).first;
    return it->second;
  }

  AdRecord stored_ad(const std::string& id) const {
    auto ad = store_.get_ad(id);
    if (!ad) throw ApiException(404, "UNKNOWN_AD", "unknown ad '" + id + "'");
    return *ad;
  }

  static json probabilities_json(const ClassProbabilities& p) {
    json j = json::object();
    for (auto c : kAllClasses) j[std::string(to_string(c))] = p[static_cast<std::size_t>(index_of(c))];
    return j;
  }

  static AdRecord parse_record(const json& j) {
    try {
      return ad_from_json(j);
    } catch (const json::exception& e) {
      throw ApiException(422, "VALIDATION_FAILED", std::string("ad payload: ") + e.what());
    }
  }

  /// Decodes frames_base64 into PNG byte strings keyed by content name.
  static std::vector<std::pair<std::string, std::vector<std::uint8_t>>> inline_frames(const json& body) {
    std::vector<std::pair<std::string, std::vector<std::uint8_t>>> out;
    if (!body.contains("frames_base64")) return out;
    const auto& arr = body["frames_base64"];
    if (!arr.is_array()) throw ApiException(422, "VALIDATION_FAILED", "frames_base64 must be an array");
    for (const auto& f : arr) {
      if (!f.is_string()) throw ApiException(422, "VALIDATION_FAILED", "frames_base64 entries must be strings");
      auto bytes = base64_decode(f.get<std::string>());
      try {
        (void)decode_png(bytes);
      } catch (const Error&) {
        throw ApiException(422, "VALIDATION_FAILED", "frames_base64 entry is not a PNG");
      }
      out.emplace_back(sha256_hex(bytes) + ".png", std::move(bytes));
    }
    return out;
  }

  void routes() {
    server_.set_pre_routing_handler([this](const httplib::Request&, httplib::Response& res) {
      char id[32];
      std::snprintf(id, sizeof id, "req-%08llu", static_cast<unsigned long long>(++request_seq_));
      res.set_header("X-Request-Id", id);
      return httplib::Server::HandlerResponse::Unhandled;
    });
    server_.set_error_handler([](const httplib::Request& req, httplib::Response& res) {
      if (!res.body.empty()) return httplib::Server::HandlerResponse::Unhandled;
      const int status = res.status;
      send_error(res, status, status == 404 ? "NOT_FOUND" : "HTTP_" + std::to_string(status),
                 "no route for " + req.method + " " + req.path);
      return httplib::Server::HandlerResponse::Handled;
    });
    server_.set_exception_handler([](const httplib::Request&, httplib::Response& res, std::exception_ptr) {
      send_error(res, 500, "INTERNAL", "unhandled server error");
    });

    server_.Get("/api/health", guarded([this](const httplib::Request&, httplib::Response& res) {
      std::size_t queued = 0, running = 0;
      for (const auto& j : jobs_.list()) {
        queued += j.state == JobStatus::Queued;
        running += j.state == JobStatus::Running;
      }
      send_json(res, 200,
                {{"status", "ok"},
                 {"ads", store_.ad_count()},
                 {"models", store_.model_names()},
                 {"jobs", {{"queued", queued}, {"running", running}}}});
    }));

    server_.Post("/api/ads", guarded([this](const httplib::Request& req, httplib::Response& res) {
      const json body = parse_body(req);
      AdRecord ad = parse_record(body);
      const auto frames = inline_frames(body);
      for (const auto& [name, bytes] : frames) ad.creative.frames.push_back(name);
      const auto schema = store_.meta().schema;
      FeatureSchema s;
      if (schema) {
        s = *schema;
      } else {
        for (const auto& [k, v] : ad.continuous_features) s.continuous.push_back(k);
        for (const auto& [k, v] : ad.categorical_features) s.categorical.push_back({k, {}});
      }
      for (const auto& [name, bytes] : frames) store_.put_image(bytes);
      validate_ad(ad, s, store_.images_dir());
      const bool created = store_.put_ad(ad);
      send_json(res, created ? 201 : 200, {{"ad_id", ad.ad_id}, {"frames", ad.creative.frames}, {"created", created}});
    }));

    server_.Get(R"(/api/ads/([^/]+))", guarded([this](const httplib::Request& req, httplib::Response& res) {
      send_json(res, 200, to_json(stored_ad(req.matches[1])));
    }));

    server_.Post("/api/score", guarded([this](const httplib::Request& req, httplib::Response& res) {
      const json body = parse_body(req);
      const std::string name = body.value("model", req.has_param("model") ? req.get_param_value("model") : opt_.default_model);
      const bool persist = req.get_param_value("persist") == "true";
      const auto m = model(name);
      auto ctx = m->preprocess_context(store_.images_dir());
      AdRecord ad;
      bool linkable = true;
      if (body.contains("ad_id")) {
        if (!body["ad_id"].is_string()) throw ApiException(422, "VALIDATION_FAILED", "ad_id must be a string");
        ad = stored_ad(body["ad_id"].get<std::string>());
      } else if (body.contains("ad")) {
        ad = parse_record(body["ad"]);
        const auto frames = inline_frames(body);
        std::map<std::string, std::vector<std::uint8_t>> memory;
        for (const auto& [fname, bytes] : frames) {
          ad.creative.frames.push_back(fname);
          memory[fname] = bytes;
        }
        std::vector<Violation> missing;
        for (const auto& f : ad.creative.frames) {
          if (!memory.count(f) && !store_.has_image(f)) missing.push_back({ErrorCode::UnresolvableImage, "frames", f});
        }
        if (!missing.empty()) throw ValidationError(missing);
        validate_ad(ad, m->schema);
        const auto root = store_.images_dir();
        ctx.load_frame = [memory, root](const std::string& ref) {
          auto it = memory.find(ref);
          return it != memory.end() ? decode_png(it->second) : read_png(root / ref);
        };
        if (persist) {
          for (const auto& [fname, bytes] : frames) store_.put_image(bytes);
          store_.put_ad(ad);
        }
        linkable = persist || store_.get_ad(ad.ad_id) == ad;
      } else {
        throw ApiException(422, "VALIDATION_FAILED", "score request needs 'ad_id' or 'ad'");
      }
      const auto r = m->predict_ad(ad, ctx);
      json out{{"ad_id", ad.ad_id},
               {"model", name},
               {"model_id", model_id(name, *m)},
               {"probabilities", probabilities_json(r.probabilities)},
               {"predicted_class", to_string(r.predicted_class)},
               {"persisted", persist},
               {"heatmap", nullptr}};
      if (linkable && !ad.creative.frames.empty()) {
        out["heatmap"] = "/api/ads/" + ad.ad_id + "/heatmap?model=" + name;
      }
      send_json(res, 200, out);
    }));

    server_.Get(R"(/api/ads/([^/]+)/heatmap)", guarded([this](const httplib::Request& req, httplib::Response& res) {
      const AdRecord ad = stored_ad(req.matches[1]);
      const std::string name = req.has_param("model") ? req.get_param_value("model") : opt_.default_model;
      const auto m = model(name);
      auto number = [&](const char* key, double fallback) {
        if (!req.has_param(key)) return fallback;
        const auto text = req.get_param_value(key);
        try {
          std::size_t used = 0;
          const double v = std::stod(text, &used);
          if (used != text.size()) throw std::invalid_argument(text);
          return v;
        } catch (const std::exception&) {
          throw ApiException(422, "INVALID_ARGUMENT", std::string(key) + " must be a number, got '" + text + "'");
        }
      };
      const double alpha = number("alpha", 0.5);
      if (!(alpha >= 0.0 && alpha <= 1.0)) throw ApiException(422, "INVALID_ARGUMENT", "alpha must lie in [0,1]");
      const double frame_value = number("frame", 0);
      if (frame_value != std::floor(frame_value) || frame_value < 0 ||
          frame_value >= static_cast<double>(ad.creative.frames.size())) {
        throw ApiException(422, "INVALID_ARGUMENT",
                           "frame must be an integer in [0, " + std::to_string(ad.creative.frames.size()) + ")");
      }
      const std::string format = req.has_param("format") ? req.get_param_value("format") : "json";
      if (format != "json" && format != "png") throw ApiException(422, "INVALID_ARGUMENT", "format must be json or png");
      const auto cmap = req.has_param("colormap") ? viz::parse_colormap(req.get_param_value("colormap")) : viz::Colormap::BlueRed;
      const auto h = viz::ad_heatmap(*m, ad, m->preprocess_context(store_.images_dir()), static_cast<int>(frame_value),
                                     alpha, cmap);
      const auto png = encode_png(h.overlay.image);
      const auto id = model_id(name, *m);
      if (format == "png") {
        res.status = 200;
        res.set_header("X-Model-Id", id);
        res.set_content(std::string(png.begin(), png.end()), "image/png");
        return;
      }
      json side = viz::sidecar_json(h.overlay, h.map, id, ad.ad_id);
      side["frame"] = h.frame;
      side["width"] = h.overlay.image.width();
      side["height"] = h.overlay.image.height();
      side["image_png_base64"] = base64_encode(png);
      send_json(res, 200, side);
    }));

    server_.Post("/api/analyses", guarded([this](const httplib::Request& req, httplib::Response& res) {
      const json body = parse_body(req);
      if (!body.contains("kind") || !body["kind"].is_string()) {
        throw ApiException(422, "INVALID_ARGUMENT", "analysis request needs a 'kind' string");
      }
      const auto kind = parse_job_kind(body["kind"].get<std::string>());
      const json params = body.value("params", json::object());
      try {
        validate_analysis_params(store_, kind, params);
      } catch (const Error& e) {
        if (e.code() == ErrorCode::NotFound) throw ApiException(404, "UNKNOWN_REFERENCE", e.what());
        throw;
      }
      send_json(res, 202, to_json(jobs_.submit(kind, params)));
    }));

    server_.Get(R"(/api/analyses/([^/]+))", guarded([this](const httplib::Request& req, httplib::Response& res) {
      const auto job = jobs_.get(req.matches[1]);
      if (!job) throw ApiException(404, "UNKNOWN_JOB", "unknown job '" + std::string(req.matches[1]) + "'");
      json out = to_json(*job);
      if (job->state == JobStatus::Done && job->result.is_object() && job->result.contains("report")) {
        const auto path = store_.root() / job->result["report"].get<std::string>();
        if (fs::exists(path)) out["report"] = json::parse(read_text(path));
      }
      send_json(res, 200, out);
    }));

    server_.Post("/api/personas", guarded([this](const httplib::Request& req, httplib::Response& res) {
      const json body = parse_body(req);
      const auto interests = string_array(body, "interests");
      auto few_shot = string_array(body, "few_shot");
      if (few_shot.empty()) few_shot = llm::default_few_shot_examples();
      const auto p = llm::persona_with_image(interests, analysis_.backend, analysis_.images, analysis_.templates, few_shot,
                                             store_.images_dir(), analysis_.clock);
      send_json(res, 201, to_json(p));
    }));

    server_.Get("/api/insights", guarded([this](const httplib::Request&, httplib::Response& res) {
      const auto path = store_.insights_path(store_.meta().corpus_id);
      json rows = json::array();
      if (fs::exists(path)) {
        for (const auto& r : llm::read_insights_table(path)) rows.push_back(to_json(r));
      }
      send_json(res, 200, {{"corpus_id", store_.meta().corpus_id}, {"records", rows}});
    }));

    server_.Get(R"(/api/images/([^/]+))", guarded([this](const httplib::Request& req, httplib::Response& res) {
      const std::string name = req.matches[1];
      if (!Store::valid_name(name) || !store_.has_image(name)) {
        throw ApiException(404, "NOT_FOUND", "unknown image '" + name + "'");
      }
      const auto bytes = read_bytes(store_.images_dir() / name);
      res.status = 200;
      res.set_content(std::string(bytes.begin(), bytes.end()), "image/png");
    }));
  }

  Store& store_;
  JobExecutor& jobs_;
  AnalysisContext& analysis_;
  ApiOptions opt_;
  httplib::Server server_;
  std::atomic<unsigned long long> request_seq_{0};
  std::mutex id_mu_;
  std::map<std::string, std::string> model_ids_;
};

}  // namespace soda::service
