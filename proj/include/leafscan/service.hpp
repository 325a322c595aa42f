// Copyright 2026 The LeafScan Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>
#include <opencv2/core.hpp>

#include "leafscan/error.hpp"
#include "leafscan/metrics.hpp"
#include "leafscan/overlay.hpp"

namespace leafscan {

/// Payload above the configured size limit (HTTP 413).
class UploadTooLargeError : public Error {
 public:
  using Error::Error;
};

/// Payload is not a decodable JPEG or PNG (HTTP 422).
class UndecodableImageError : public Error {
 public:
  using Error::Error;
};

/// Unknown submission or model run (HTTP 404).
class NotFoundError : public Error {
 public:
  using Error::Error;
};

/// Resource exists but is not in a state that can serve the request (HTTP 409).
class NotReadyError : public Error {
 public:
  using Error::Error;
};

struct ServiceConfig {
  std::string addr = "127.0.0.1:8080";
  std::filesystem::path storage = "storage";
  double score_threshold = kDefaultScoreThreshold;
  std::size_t max_upload_bytes = 25U << 20;
  int workers = 1;
  std::filesystem::path runs_dir = "runs";
  /// Run activated at startup; empty starts without a model.
  std::string model_run;

  /// Throws ConfigError.
  void validate() const;

  /// Reads LEAFSCAN_ADDR, LEAFSCAN_STORAGE, LEAFSCAN_SCORE_THRESHOLD,
  /// LEAFSCAN_MAX_UPLOAD_BYTES, LEAFSCAN_WORKERS, LEAFSCAN_RUNS_DIR and
  /// LEAFSCAN_MODEL_RUN over the defaults. Throws ConfigError.
  static ServiceConfig from_env(
      const std::function<const char*(const char*)>& lookup = [](const char* k) {
        return std::getenv(k);
      });
};

/// Read-only after construction; `detect` may be called concurrently.
class DetectionEngine {
 public:
  virtual ~DetectionEngine() = default;
  [[nodiscard]] virtual std::vector<Detection> detect(const cv::Mat& image,
                                                      double score_floor) const = 0;
  [[nodiscard]] virtual std::string run_id() const = 0;
};

/// Resolves a run id to an engine; throws NotFoundError or LoadError.
using EngineLoader = std::function<std::shared_ptr<const DetectionEngine>(const std::string&)>;

/// Engine backed by the newest detector checkpoint of a run directory.
std::shared_ptr<const DetectionEngine> load_detector_engine(const std::filesystem::path& run_dir);
/// Loader resolving run ids to <runs_dir>/<run_id>.
EngineLoader runs_dir_loader(std::filesystem::path runs_dir);

enum class SubmissionStatus : std::uint8_t { kQueued, kProcessed, kFailed };
std::string_view to_string(SubmissionStatus status);

struct Submission {
  std::string submission_id;
  std::string image_file;  // inside the submission directory
  std::string content_type;
  std::string received_at;  // ISO-8601 UTC
  SubmissionStatus status = SubmissionStatus::kQueued;
  std::string failure_reason;
};

nlohmann::json submission_to_json(const Submission& submission);

struct DamageReport {
  std::string submission_id;
  Label verdict = Label::kHealthy;
  std::vector<Detection> detections;
  double extent = 0.0;
  std::string model_run_id;
  ImageDims dims;
  double score_threshold = kDefaultScoreThreshold;
};

/// Builds the report for `detections` at `score_threshold`: detections below
/// the threshold are dropped, verdict and extent are derived from the rest.
DamageReport make_damage_report(std::string submission_id, std::vector<Detection> detections,
                                ImageDims dims, double score_threshold, std::string model_run_id);

/// {submission_id, status: "processed", verdict, extent, score_threshold,
///  model_run_id, image: {width, height}, detections: [...RLE masks...],
///  overlay: url}
nlohmann::json damage_report_to_json(const DamageReport& report);

/// Detects JPEG/PNG by signature and decodes with EXIF orientation applied.
/// Throws UndecodableImageError.
cv::Mat decode_upload(std::string_view bytes);

/// Accepts uploads, runs detection on a bounded worker pool and persists
/// submissions, reports and overlays under <storage>/submissions/<id>/.
/// Existing submissions are reloaded at construction; queued ones are
/// processed again.
class SubmissionService {
 public:
  explicit SubmissionService(ServiceConfig config, EngineLoader loader = {});
  ~SubmissionService();
  SubmissionService(const SubmissionService&) = delete;
  SubmissionService& operator=(const SubmissionService&) = delete;

  /// Persists the image and queues it. Identical uploads get distinct ids.
  Submission submit(std::string_view bytes, std::string_view content_type = {});

  [[nodiscard]] Submission submission(std::string_view id) const;
  /// Processed: the full report. Queued: {submission_id, status}. Failed:
  /// {submission_id, status, reason}. Throws NotFoundError.
  [[nodiscard]] nlohmann::json report_document(std::string_view id) const;
  /// Throws NotFoundError, or NotReadyError unless processed.
  [[nodiscard]] std::vector<std::uint8_t> overlay_png(std::string_view id) const;
  /// Re-renders with only the chosen layers (masks, boxes, scores) from the
  /// stored upload and report. With every layer off this is the upright
  /// original image, which clients use to draw layers themselves.
  [[nodiscard]] std::vector<std::uint8_t> overlay_png(std::string_view id,
                                                      const OverlayOptions& layers) const;

  void set_engine(std::shared_ptr<const DetectionEngine> engine);
  /// Loads `run_id` through the loader and makes it active.
  std::string activate_model(const std::string& run_id);
  [[nodiscard]] std::optional<std::string> model_run_id() const;

  /// Blocks until the queue is drained and no job is running.
  bool wait_idle(std::chrono::milliseconds timeout) const;

  [[nodiscard]] const ServiceConfig& config() const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

/// "host:port" -> (host, port). Throws ConfigError.
std::pair<std::string, int> parse_listen_address(std::string_view addr);

/// REST front end:
///   POST /api/v1/submissions                 multipart field "image"
///   GET  /api/v1/submissions/{id}            submission record
///   GET  /api/v1/submissions/{id}/report     report or status payload
///   GET  /api/v1/submissions/{id}/overlay    PNG; ?masks=0&boxes=0&scores=0 hide layers
///   GET  /api/v1/healthz                     {status, model_run_id}
///   POST /api/v1/admin/model                 {run_id}
class HttpServer {
 public:
  explicit HttpServer(SubmissionService& service);
  ~HttpServer();
  HttpServer(const HttpServer&) = delete;
  HttpServer& operator=(const HttpServer&) = delete;

  /// Binds and serves until stop(); throws IoError when binding fails.
  void listen(const std::string& addr);
  /// Binds an ephemeral port and returns it; serve with run().
  int bind_ephemeral(const std::string& host = "127.0.0.1");
  void run();
  void stop();
  /// Blocks until the server is accepting connections.
  void wait_until_ready() const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace leafscan
