#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <string>

#include <nlohmann/json.hpp>

#include "txst/stylize.hpp"

namespace txst {

struct ServiceOptions {
  std::string host = "127.0.0.1";
  int port = 8080;
  std::size_t max_upload_bytes = 16u << 20;
  std::int64_t max_side = 1024;
  int max_in_flight = 4;

  static ServiceOptions from_config(const nlohmann::json& config);
};

/// Parses the JSON prompt spec of a stylize request:
///   {"prompts": [{"text": "...", "weight": 1} | {"image_field": "<multipart name>", "weight": 1}],
///    "strength": 1.0, "seed": 0, "combine_text": false, "metrics": false}
/// Image prompts are resolved through `image_lookup(field)`.
struct StylizeRequest {
  StylePrompt prompt;
  double strength = 1.0;
  std::uint64_t seed = 0;
  bool metrics = false;
};
StylizeRequest parse_stylize_request(const nlohmann::json& spec,
                                     const std::function<torch::Tensor(const std::string&)>& image_lookup);

/// Runs one request end to end and returns the response body:
///   {"image_png_base64", "width", "height", "metrics"?, "model", "seed", "timing_ms"}
nlohmann::json handle_stylize(const Stylizer& stylizer, const torch::Tensor& content, const StylizeRequest& request,
                              std::int64_t max_side);

std::string base64_encode(const std::string& bytes);
std::string base64_decode(const std::string& text);

/// HTTP front end over an immutable Stylizer snapshot.
///   POST /v1/stylize  multipart: "content" file + "spec" JSON (+ files named by image prompts)
///   GET  /v1/artists  GET /v1/model  GET /v1/health
/// Answers 503 until a model is loaded, 413 for oversized bodies and 429 when
/// `max_in_flight` requests are already running.
class Service {
 public:
  explicit Service(ServiceOptions options);
  ~Service();

  /// Replaces the served model; in-flight requests finish on the old one.
  void load(std::shared_ptr<const Stylizer> stylizer);
  bool ready() const;

  /// Binds to options.port (0 picks a free port) and returns the bound port.
  int bind();
  /// Blocks serving requests until stop().
  void serve();
  void stop();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace txst
