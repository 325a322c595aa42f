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

#include "leafscan/service.hpp"

#include <algorithm>
#include <condition_variable>
#include <ctime>
#include <deque>
#include <fstream>
#include <map>
#include <mutex>
#include <random>
#include <thread>

#include <opencv2/imgcodecs.hpp>

#include "leafscan/evaluation.hpp"
#include "leafscan/models.hpp"
#include "leafscan/overlay.hpp"

namespace leafscan {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string utc_now() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t t = std::chrono::system_clock::to_time_t(now);
  const auto ms =
      std::chrono::duration_cast<std::chrono::milliseconds>(now.time_since_epoch()).count() % 1000;
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[40];
  const std::size_t n = std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%S", &tm);
  std::snprintf(buf + n, sizeof(buf) - n, ".%03dZ", static_cast<int>(ms));
  return buf;
}

void write_atomic(const fs::path& path, std::string_view bytes) {
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError("cannot write " + tmp.string());
  }
  fs::rename(tmp, path);
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

bool is_jpeg(std::string_view b) { return b.size() >= 3 && b.substr(0, 3) == "\xFF\xD8\xFF"; }
bool is_png(std::string_view b) { return b.size() >= 8 && b.substr(0, 8) == "\x89PNG\r\n\x1A\n"; }

SubmissionStatus status_from(const std::string& s) {
  if (s == "queued") return SubmissionStatus::kQueued;
  if (s == "processed") return SubmissionStatus::kProcessed;
  if (s == "failed") return SubmissionStatus::kFailed;
  throw ParseError("submission: unknown status '" + s + "'");
}

Submission submission_from_json(const json& doc) {
  Submission s;
  s.submission_id = doc.at("submission_id").get<std::string>();
  s.image_file = doc.at("image_file").get<std::string>();
  s.content_type = doc.value("content_type", "");
  s.received_at = doc.at("received_at").get<std::string>();
  s.status = status_from(doc.at("status").get<std::string>());
  s.failure_reason = doc.value("reason", "");
  return s;
}

template <typename T>
T parse_number(const char* key, const char* text) {
  const std::string s(text);
  try {
    std::size_t used = 0;
    T v;
    if constexpr (std::is_floating_point_v<T>) {
      v = static_cast<T>(std::stod(s, &used));
    } else {
      const long long raw = std::stoll(s, &used);
      if (raw < 0) throw std::invalid_argument("negative");
      v = static_cast<T>(raw);
    }
    if (used != s.size()) throw std::invalid_argument("trailing characters");
    return v;
  } catch (const std::exception&) {
    throw ConfigError(std::string(key) + ": cannot parse '" + s + "'");
  }
}

class DetectorEngine : public DetectionEngine {
 public:
  DetectorEngine(Detector detector, std::string run_id)
      : detector_(std::move(detector)), run_id_(std::move(run_id)) {}
  [[nodiscard]] std::vector<Detection> detect(const cv::Mat& image,
                                              double score_floor) const override {
    return detector_.detect(image, score_floor);
  }
  [[nodiscard]] std::string run_id() const override { return run_id_; }

 private:
  Detector detector_;
  std::string run_id_;
};

}  // namespace

void ServiceConfig::validate() const {
  if (!(score_threshold >= 0.0 && score_threshold <= 1.0)) {
    throw ConfigError("score threshold must lie in [0, 1]");
  }
  if (max_upload_bytes == 0) throw ConfigError("max upload size must be positive");
  if (workers < 1) throw ConfigError("worker count must be >= 1");
  parse_listen_address(addr);
}

ServiceConfig ServiceConfig::from_env(const std::function<const char*(const char*)>& lookup) {
  ServiceConfig c;
  if (const char* v = lookup("LEAFSCAN_ADDR"); v && *v) c.addr = v;
  if (const char* v = lookup("LEAFSCAN_STORAGE"); v && *v) c.storage = v;
  if (const char* v = lookup("LEAFSCAN_SCORE_THRESHOLD"); v && *v) {
    c.score_threshold = parse_number<double>("LEAFSCAN_SCORE_THRESHOLD", v);
  }
  if (const char* v = lookup("LEAFSCAN_MAX_UPLOAD_BYTES"); v && *v) {
    c.max_upload_bytes = parse_number<std::size_t>("LEAFSCAN_MAX_UPLOAD_BYTES", v);
  }
  if (const char* v = lookup("LEAFSCAN_WORKERS"); v && *v) {
    c.workers = parse_number<int>("LEAFSCAN_WORKERS", v);
  }
  if (const char* v = lookup("LEAFSCAN_RUNS_DIR"); v && *v) c.runs_dir = v;
  if (const char* v = lookup("LEAFSCAN_MODEL_RUN"); v && *v) c.model_run = v;
  c.validate();
  return c;
}

std::pair<std::string, int> parse_listen_address(std::string_view addr) {
  const auto colon = addr.rfind(':');
  if (colon == std::string_view::npos || colon == 0) {
    throw ConfigError("listen address must be host:port, got '" + std::string(addr) + "'");
  }
  const std::string host(addr.substr(0, colon));
  const std::string port_text(addr.substr(colon + 1));
  int port = -1;
  try {
    std::size_t used = 0;
    port = std::stoi(port_text, &used);
    if (used != port_text.size()) port = -1;
  } catch (const std::exception&) {
    port = -1;
  }
  if (port < 0 || port > 65535) {
    throw ConfigError("invalid port in listen address '" + std::string(addr) + "'");
  }
  return {host, port};
}

std::shared_ptr<const DetectionEngine> load_detector_engine(const fs::path& run_dir) {
  return std::make_shared<DetectorEngine>(Detector::load(latest_checkpoint(run_dir)),
                                          run_dir.filename().string());
}

EngineLoader runs_dir_loader(fs::path runs_dir) {
  return [runs_dir = std::move(runs_dir)](const std::string& run_id) {
    if (run_id.empty() || run_id.find('/') != std::string::npos || run_id == "." ||
        run_id == "..") {
      throw NotFoundError("invalid run id '" + run_id + "'");
    }
    const fs::path dir = runs_dir / run_id;
    if (!fs::is_directory(dir)) {
      throw NotFoundError("unknown model run '" + run_id + "'");
    }
    return load_detector_engine(dir);
  };
}

std::string_view to_string(SubmissionStatus status) {
  switch (status) {
    case SubmissionStatus::kQueued:
      return "queued";
    case SubmissionStatus::kProcessed:
      return "processed";
    case SubmissionStatus::kFailed:
      return "failed";
  }
  return "queued";
}

json submission_to_json(const Submission& s) {
  json doc = {{"submission_id", s.submission_id},
              {"image_file", s.image_file},
              {"content_type", s.content_type},
              {"received_at", s.received_at},
              {"status", to_string(s.status)}};
  if (s.status == SubmissionStatus::kFailed) doc["reason"] = s.failure_reason;
  return doc;
}

DamageReport make_damage_report(std::string submission_id, std::vector<Detection> detections,
                                ImageDims dims, double score_threshold, std::string model_run_id) {
  DamageReport r;
  r.submission_id = std::move(submission_id);
  std::erase_if(detections, [&](const Detection& d) { return d.score < score_threshold; });
  r.detections = std::move(detections);
  r.dims = dims;
  r.score_threshold = score_threshold;
  r.model_run_id = std::move(model_run_id);
  r.verdict = image_level_verdict(r.detections, score_threshold);
  r.extent = damage_extent(r.detections, dims);
  return r;
}

json damage_report_to_json(const DamageReport& r) {
  json dets = json::array();
  for (const auto& d : r.detections) dets.push_back(detection_to_json(d, r.dims));
  return {{"submission_id", r.submission_id},
          {"status", "processed"},
          {"verdict", to_string(r.verdict)},
          {"extent", r.extent},
          {"score_threshold", r.score_threshold},
          {"model_run_id", r.model_run_id},
          {"image", {{"width", r.dims.width}, {"height", r.dims.height}}},
          {"detections", std::move(dets)},
          {"overlay", "/api/v1/submissions/" + r.submission_id + "/overlay"}};
}

cv::Mat decode_upload(std::string_view bytes) {
  if (!is_jpeg(bytes) && !is_png(bytes)) {
    throw UndecodableImageError("payload is not a JPEG or PNG image");
  }
  const cv::Mat raw(1, static_cast<int>(bytes.size()), CV_8UC1,
                    const_cast<char*>(bytes.data()));
  cv::Mat img = cv::imdecode(raw, cv::IMREAD_COLOR);
  if (img.empty()) {
    throw UndecodableImageError("image payload could not be decoded");
  }
  return img;
}

struct SubmissionService::Impl {
  struct Entry {
    Submission submission;
    std::string report;  // serialized once, served verbatim
  };

  ServiceConfig config;
  EngineLoader loader;
  fs::path root;

  mutable std::mutex mu;
  std::condition_variable work_cv;
  mutable std::condition_variable idle_cv;
  std::map<std::string, Entry, std::less<>> entries;
  std::deque<std::string> queue;
  int running = 0;
  bool stopping = false;
  std::shared_ptr<const DetectionEngine> engine;
  std::mt19937_64 id_rng{std::random_device{}()};
  std::vector<std::thread> workers;

  fs::path dir_of(std::string_view id) const { return root / std::string(id); }

  const Entry& find(std::string_view id) const {
    const auto it = entries.find(id);
    if (it == entries.end()) throw NotFoundError("unknown submission '" + std::string(id) + "'");
    return it->second;
  }

  void persist(const Submission& s) const {
    write_atomic(dir_of(s.submission_id) / "submission.json", submission_to_json(s).dump(2));
  }

  void recover() {
    std::error_code ec;
    std::vector<Submission> pending;
    for (const auto& entry : fs::directory_iterator(root, ec)) {
      const fs::path doc = entry.path() / "submission.json";
      if (!fs::is_regular_file(doc)) continue;
      try {
        Entry e{submission_from_json(json::parse(read_file(doc))), {}};
        if (e.submission.status == SubmissionStatus::kProcessed) {
          e.report = read_file(entry.path() / "report.json");
        }
        if (e.submission.status == SubmissionStatus::kQueued) pending.push_back(e.submission);
        entries.emplace(e.submission.submission_id, std::move(e));
      } catch (const std::exception&) {
        // A half-written submission from a crash; leave it on disk, do not serve it.
      }
    }
    std::sort(pending.begin(), pending.end(), [](const auto& a, const auto& b) {
      return a.received_at < b.received_at;
    });
    for (const auto& s : pending) queue.push_back(s.submission_id);
  }

  std::string new_id() {
    char buf[33];
    std::snprintf(buf, sizeof(buf), "%016llx%016llx", static_cast<unsigned long long>(id_rng()),
                  static_cast<unsigned long long>(id_rng()));
    return buf;
  }

  // Runs one job outside the lock; returns the finished submission and report.
  std::pair<Submission, std::string> process(Submission s,
                                             const std::shared_ptr<const DetectionEngine>& eng) {
    try {
      if (!eng) throw NotReadyError("no active model");
      const fs::path dir = dir_of(s.submission_id);
      const cv::Mat image = decode_upload(read_file(dir / s.image_file));
      DamageReport report = make_damage_report(
          s.submission_id, eng->detect(image, config.score_threshold),
          {image.cols, image.rows}, config.score_threshold, eng->run_id());
      const auto png = encode_png(render_overlay(image, report.detections));
      write_atomic(dir / "overlay.png",
                   std::string_view(reinterpret_cast<const char*>(png.data()), png.size()));
      json doc = damage_report_to_json(report);
      doc["received_at"] = s.received_at;
      doc["processed_at"] = utc_now();
      std::string body = doc.dump();
      write_atomic(dir / "report.json", body);
      s.status = SubmissionStatus::kProcessed;
      persist(s);
      return {s, std::move(body)};
    } catch (const std::exception& e) {
      s.status = SubmissionStatus::kFailed;
      s.failure_reason = e.what();
      try {
        persist(s);
      } catch (const std::exception&) {
        // Storage is failing too; the in-memory state still records the failure.
      }
      return {s, {}};
    }
  }

  void worker_loop() {
    for (;;) {
      Submission job;
      std::shared_ptr<const DetectionEngine> eng;
      {
        std::unique_lock lock(mu);
        work_cv.wait(lock, [&] { return stopping || !queue.empty(); });
        if (stopping) return;
        job = entries.at(queue.front()).submission;
        queue.pop_front();
        ++running;
        eng = engine;
      }
      auto [done, report] = process(std::move(job), eng);
      {
        std::lock_guard lock(mu);
        auto& entry = entries.at(done.submission_id);
        entry.submission = std::move(done);
        entry.report = std::move(report);
        --running;
      }
      idle_cv.notify_all();
    }
  }
};

SubmissionService::SubmissionService(ServiceConfig config, EngineLoader loader)
    : impl_(std::make_unique<Impl>()) {
  config.validate();
  impl_->config = std::move(config);
  impl_->loader = std::move(loader);
  impl_->root = impl_->config.storage / "submissions";
  std::error_code ec;
  fs::create_directories(impl_->root, ec);
  if (!fs::is_directory(impl_->root)) {
    throw IoError("cannot create storage directory " + impl_->root.string());
  }
  impl_->recover();
  if (!impl_->config.model_run.empty()) activate_model(impl_->config.model_run);
  for (int i = 0; i < impl_->config.workers; ++i) {
    impl_->workers.emplace_back([this] { impl_->worker_loop(); });
  }
}

SubmissionService::~SubmissionService() {
  {
    std::lock_guard lock(impl_->mu);
    impl_->stopping = true;
  }
  impl_->work_cv.notify_all();
  for (auto& t : impl_->workers) t.join();
}

Submission SubmissionService::submit(std::string_view bytes, std::string_view content_type) {
  if (bytes.size() > impl_->config.max_upload_bytes) {
    throw UploadTooLargeError("upload of " + std::to_string(bytes.size()) +
                              " bytes exceeds the limit of " +
                              std::to_string(impl_->config.max_upload_bytes));
  }
  (void)decode_upload(bytes);
  Submission s;
  {
    std::lock_guard lock(impl_->mu);
    do {
      s.submission_id = impl_->new_id();
    } while (impl_->entries.contains(s.submission_id));
  }
  s.image_file = is_png(bytes) ? "image.png" : "image.jpg";
  s.content_type = std::string(content_type);
  s.received_at = utc_now();
  s.status = SubmissionStatus::kQueued;
  const fs::path dir = impl_->dir_of(s.submission_id);
  fs::create_directories(dir);
  write_atomic(dir / s.image_file, bytes);
  impl_->persist(s);
  {
    std::lock_guard lock(impl_->mu);
    impl_->entries.emplace(s.submission_id, Impl::Entry{s, {}});
    impl_->queue.push_back(s.submission_id);
  }
  impl_->work_cv.notify_one();
  return s;
}

Submission SubmissionService::submission(std::string_view id) const {
  std::lock_guard lock(impl_->mu);
  return impl_->find(id).submission;
}

json SubmissionService::report_document(std::string_view id) const {
  std::lock_guard lock(impl_->mu);
  const auto& e = impl_->find(id);
  switch (e.submission.status) {
    case SubmissionStatus::kProcessed:
      return json::parse(e.report);
    case SubmissionStatus::kFailed:
      return {{"submission_id", e.submission.submission_id},
              {"status", "failed"},
              {"reason", e.submission.failure_reason}};
    case SubmissionStatus::kQueued:
      break;
  }
  return {{"submission_id", e.submission.submission_id}, {"status", "queued"}};
}

std::vector<std::uint8_t> SubmissionService::overlay_png(std::string_view id) const {
  fs::path path;
  {
    std::lock_guard lock(impl_->mu);
    const auto& e = impl_->find(id);
    if (e.submission.status != SubmissionStatus::kProcessed) {
      throw NotReadyError("submission '" + std::string(id) + "' is " +
                          std::string(to_string(e.submission.status)));
    }
    path = impl_->dir_of(id) / "overlay.png";
  }
  const std::string bytes = read_file(path);
  return {bytes.begin(), bytes.end()};
}

std::vector<std::uint8_t> SubmissionService::overlay_png(std::string_view id,
                                                        const OverlayOptions& layers) const {
  if (layers.masks && layers.boxes && layers.scores) return overlay_png(id);
  fs::path image_path;
  std::string report;
  {
    std::lock_guard lock(impl_->mu);
    const auto& e = impl_->find(id);
    if (e.submission.status != SubmissionStatus::kProcessed) {
      throw NotReadyError("submission '" + std::string(id) + "' is " +
                          std::string(to_string(e.submission.status)));
    }
    image_path = impl_->dir_of(id) / e.submission.image_file;
    report = e.report;
  }
  const cv::Mat image = decode_upload(read_file(image_path));
  std::vector<Detection> detections;
  const json doc = json::parse(report);
  for (const auto& d : doc.at("detections")) detections.push_back(detection_from_json(d));
  return encode_png(render_overlay(image, detections, layers));
}

void SubmissionService::set_engine(std::shared_ptr<const DetectionEngine> engine) {
  std::lock_guard lock(impl_->mu);
  impl_->engine = std::move(engine);
}

std::string SubmissionService::activate_model(const std::string& run_id) {
  if (!impl_->loader) throw NotFoundError("no model loader configured");
  auto engine = impl_->loader(run_id);
  const std::string id = engine->run_id();
  set_engine(std::move(engine));
  return id;
}

std::optional<std::string> SubmissionService::model_run_id() const {
  std::lock_guard lock(impl_->mu);
  if (!impl_->engine) return std::nullopt;
  return impl_->engine->run_id();
}

bool SubmissionService::wait_idle(std::chrono::milliseconds timeout) const {
  std::unique_lock lock(impl_->mu);
  return impl_->idle_cv.wait_for(lock, timeout,
                                 [&] { return impl_->queue.empty() && impl_->running == 0; });
}

const ServiceConfig& SubmissionService::config() const { return impl_->config; }

}  // namespace leafscan
