#include "txst/service.hpp"

#include <atomic>
#include <chrono>
#include <mutex>

#include <httplib.h>
#include <openssl/evp.h>

#include "txst/errors.hpp"
#include "txst/evaluator.hpp"
#include "txst/image.hpp"
#include "txst/log.hpp"

namespace txst {

ServiceOptions ServiceOptions::from_config(const nlohmann::json& config) {
  const auto& s = config.at("service");
  ServiceOptions o;
  o.host = s.at("host");
  o.port = s.at("port");
  o.max_upload_bytes = s.at("max_upload_bytes");
  o.max_side = s.at("max_side");
  o.max_in_flight = s.at("max_in_flight");
  return o;
}

std::string base64_encode(const std::string& bytes) {
  std::string out(4 * ((bytes.size() + 2) / 3), '\0');
  const int n = EVP_EncodeBlock(reinterpret_cast<unsigned char*>(out.data()),
                                reinterpret_cast<const unsigned char*>(bytes.data()), static_cast<int>(bytes.size()));
  out.resize(static_cast<std::size_t>(n));
  return out;
}

std::string base64_decode(const std::string& text) {
  if (text.size() % 4 != 0) throw DegenerateInput("malformed base64");
  std::string out(3 * text.size() / 4, '\0');
  const int n = EVP_DecodeBlock(reinterpret_cast<unsigned char*>(out.data()),
                                reinterpret_cast<const unsigned char*>(text.data()), static_cast<int>(text.size()));
  if (n < 0) throw DegenerateInput("malformed base64");
  std::size_t pad = 0;
  if (!text.empty() && text.back() == '=') ++pad;
  if (text.size() > 1 && text[text.size() - 2] == '=') ++pad;
  out.resize(static_cast<std::size_t>(n) - pad);
  return out;
}

StylizeRequest parse_stylize_request(const nlohmann::json& spec,
                                     const std::function<torch::Tensor(const std::string&)>& image_lookup) {
  if (!spec.is_object()) throw DegenerateInput("request spec must be a JSON object");
  StylizeRequest r;
  const auto& prompts = spec.value("prompts", nlohmann::json::array());
  if (!prompts.is_array() || prompts.empty()) throw DegenerateInput("request needs at least one prompt");
  for (const auto& p : prompts) {
    PromptComponent c;
    c.weight = p.value("weight", 1.0);
    if (p.contains("text") == p.contains("image_field")) {
      throw DegenerateInput("each prompt needs exactly one of 'text' or 'image_field'");
    }
    if (p.contains("text")) {
      c.kind = PromptKind::kText;
      c.text = p.at("text").get<std::string>();
    } else {
      c.kind = PromptKind::kImage;
      c.image = image_lookup(p.at("image_field").get<std::string>());
    }
    r.prompt.components.push_back(std::move(c));
  }
  r.prompt.normalized_weights();  // validates
  r.prompt.combine_text = spec.value("combine_text", false);
  r.strength = spec.value("strength", 1.0);
  if (!(r.strength >= 0.0 && r.strength <= 1.0)) throw DegenerateInput("strength must lie in [0, 1]");
  r.seed = spec.value("seed", std::uint64_t{0});
  r.metrics = spec.value("metrics", false);
  return r;
}

nlohmann::json handle_stylize(const Stylizer& stylizer, const torch::Tensor& content, const StylizeRequest& request,
                              std::int64_t max_side) {
  const auto start = std::chrono::steady_clock::now();
  auto image = limit_longest_side(content, max_side);
  // Inference has no sampling; the seed is echoed so clients can key caches on it.
  const auto embedding = request.prompt.resolve(stylizer.clip());
  auto out = stylizer.stylize_embedding(image, embedding, request.strength);
  const auto png = encode_png(out);
  nlohmann::json body = {{"image_png_base64", base64_encode(std::string(png.begin(), png.end()))},
                         {"width", out.size(2)},
                         {"height", out.size(1)},
                         {"seed", request.seed},
                         {"model",
                          {{"checkpoint_hash", stylizer.checkpoint_hash()}, {"fusion_order", stylizer.fusion_order()}}}};
  if (request.metrics) body["metrics"] = clip_scores(stylizer.clip(), image, quantize_u8(out), embedding).to_json();
  body["timing_ms"] =
      std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
  return body;
}

struct Service::Impl {
  ServiceOptions options;
  httplib::Server server;
  mutable std::mutex mutex;
  std::shared_ptr<const Stylizer> stylizer;
  std::atomic<int> in_flight{0};

  std::shared_ptr<const Stylizer> snapshot() const {
    std::lock_guard lock(mutex);
    return stylizer;
  }
};

namespace {

void reply(httplib::Response& res, int status, const nlohmann::json& body) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

void reply_error(httplib::Response& res, int status, const std::string& type, const std::string& message) {
  reply(res, status, {{"error", {{"type", type}, {"message", message}}}});
}

torch::Tensor decode_upload(const httplib::MultipartFormData& file) {
  const auto* data = reinterpret_cast<const std::uint8_t*>(file.content.data());
  return decode_image({data, file.content.size()});
}

}  // namespace

Service::Service(ServiceOptions options) : impl_(std::make_unique<Impl>()) {
  impl_->options = std::move(options);
  auto& srv = impl_->server;
  Impl* self = impl_.get();
  srv.set_payload_max_length(self->options.max_upload_bytes);

  srv.Get("/v1/health", [self](const httplib::Request&, httplib::Response& res) {
    if (self->snapshot()) {
      reply(res, 200, {{"status", "ok"}});
    } else {
      reply(res, 503, {{"status", "loading"}});
    }
  });
  srv.Get("/v1/artists", [self](const httplib::Request&, httplib::Response& res) {
    auto model = self->snapshot();
    if (!model) return reply_error(res, 503, "not_ready", "no checkpoint loaded");
    reply(res, 200, {{"artists", model->artists()}});
  });
  srv.Get("/v1/model", [self](const httplib::Request&, httplib::Response& res) {
    auto model = self->snapshot();
    if (!model) return reply_error(res, 503, "not_ready", "no checkpoint loaded");
    reply(res, 200, model->info());
  });
  srv.Post("/v1/stylize", [self](const httplib::Request& req, httplib::Response& res) {
    auto model = self->snapshot();
    if (!model) return reply_error(res, 503, "not_ready", "no checkpoint loaded");
    if (self->in_flight.fetch_add(1) >= self->options.max_in_flight) {
      self->in_flight.fetch_sub(1);
      res.set_header("Retry-After", "1");
      return reply_error(res, 429, "busy", "too many requests in flight");
    }
    struct Release {
      std::atomic<int>& n;
      ~Release() { n.fetch_sub(1); }
    } release{self->in_flight};
    try {
      if (!req.is_multipart_form_data() || !req.has_file("content")) {
        return reply_error(res, 400, "bad_request", "expected multipart form data with a 'content' part");
      }
      nlohmann::json spec = nlohmann::json::object();
      if (req.has_file("spec")) {
        spec = nlohmann::json::parse(req.get_file_value("spec").content, nullptr, false);
        if (spec.is_discarded()) return reply_error(res, 400, "bad_request", "'spec' is not valid JSON");
      }
      const auto content = decode_upload(req.get_file_value("content"));
      const auto request = parse_stylize_request(spec, [&](const std::string& field) {
        if (!req.has_file(field)) throw DegenerateInput("missing image part '" + field + "'");
        return decode_upload(req.get_file_value(field));
      });
      reply(res, 200, handle_stylize(*model, content, request, self->options.max_side));
    } catch (const CorruptImage& e) {
      reply_error(res, 400, "corrupt_image", e.what());
    } catch (const PromptTooLong& e) {
      reply_error(res, 400, "prompt_too_long", e.what());
    } catch (const DegenerateInput& e) {
      reply_error(res, 400, "bad_request", e.what());
    } catch (const ShapeError& e) {
      reply_error(res, 400, "bad_request", e.what());
    } catch (const std::exception& e) {
      log_event("error", "stylize_failed", {{"message", e.what()}});
      reply_error(res, 500, "internal", e.what());
    }
  });
  srv.set_logger([](const httplib::Request& req, const httplib::Response& res) {
    log_event("info", "request", {{"method", req.method}, {"path", req.path}, {"status", res.status}});
  });
}

Service::~Service() { stop(); }

void Service::load(std::shared_ptr<const Stylizer> stylizer) {
  std::lock_guard lock(impl_->mutex);
  impl_->stylizer = std::move(stylizer);
}

bool Service::ready() const { return impl_->snapshot() != nullptr; }

int Service::bind() {
  auto& o = impl_->options;
  if (o.port == 0) {
    o.port = impl_->server.bind_to_any_port(o.host);
  } else if (!impl_->server.bind_to_port(o.host, o.port)) {
    throw Error("cannot bind " + o.host + ":" + std::to_string(o.port));
  }
  if (o.port < 0) throw Error("cannot bind " + o.host);
  return o.port;
}

void Service::serve() { impl_->server.listen_after_bind(); }

void Service::stop() {
  if (impl_ && impl_->server.is_running()) impl_->server.stop();
}

}  // namespace txst
