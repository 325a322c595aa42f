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

#include <httplib.h>

#include "leafscan/service.hpp"

namespace leafscan {

using nlohmann::json;

namespace {

constexpr const char* kJson = "application/json";
// Multipart framing on top of the raw image bytes.
constexpr std::size_t kMultipartSlack = 64 * 1024;

void send_json(httplib::Response& res, int status, const json& body) {
  res.status = status;
  res.set_content(body.dump(), kJson);
}

void send_error(httplib::Response& res, int status, const std::string& message) {
  send_json(res, status, {{"error", message}});
}

// Maps library exceptions onto HTTP status codes.
template <typename F>
void guarded(httplib::Response& res, F&& body) {
  try {
    body();
  } catch (const UploadTooLargeError& e) {
    send_error(res, 413, e.what());
  } catch (const UndecodableImageError& e) {
    send_error(res, 422, e.what());
  } catch (const NotFoundError& e) {
    send_error(res, 404, e.what());
  } catch (const NotReadyError& e) {
    send_error(res, 409, e.what());
  } catch (const LoadError& e) {
    send_error(res, 422, e.what());
  } catch (const std::exception& e) {
    send_error(res, 500, e.what());
  }
}

}  // namespace

struct HttpServer::Impl {
  SubmissionService& service;
  httplib::Server server;
};

HttpServer::HttpServer(SubmissionService& service) : impl_(new Impl{service, {}}) {
  auto& srv = impl_->server;
  auto& svc = impl_->service;
  srv.set_payload_max_length(svc.config().max_upload_bytes + kMultipartSlack);
  srv.set_default_headers({{"Access-Control-Allow-Origin", "*"}});
  srv.Options(R"(/api/v1/.*)", [](const httplib::Request&, httplib::Response& res) {
    res.set_header("Access-Control-Allow-Methods", "GET, POST, OPTIONS");
    res.set_header("Access-Control-Allow-Headers", "Content-Type");
    res.status = 204;
  });

  srv.Post("/api/v1/submissions", [&svc](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] {
      std::string_view bytes;
      std::string content_type;
      if (req.is_multipart_form_data()) {
        if (!req.has_file("image")) {
          send_error(res, 400, "multipart field 'image' is required");
          return;
        }
        const auto& file = req.files.find("image")->second;
        bytes = file.content;
        content_type = file.content_type;
      } else {
        bytes = req.body;
        content_type = req.get_header_value("Content-Type");
      }
      const Submission s = svc.submit(bytes, content_type);
      send_json(res, 202, {{"submission_id", s.submission_id}, {"status", to_string(s.status)}});
    });
  });

  srv.Get(R"(/api/v1/submissions/([0-9a-zA-Z]+))",
          [&svc](const httplib::Request& req, httplib::Response& res) {
            guarded(res, [&] { send_json(res, 200, submission_to_json(svc.submission(req.matches[1].str()))); });
          });

  srv.Get(R"(/api/v1/submissions/([0-9a-zA-Z]+)/report)",
          [&svc](const httplib::Request& req, httplib::Response& res) {
            guarded(res, [&] { send_json(res, 200, svc.report_document(req.matches[1].str())); });
          });

  srv.Get(R"(/api/v1/submissions/([0-9a-zA-Z]+)/overlay)",
          [&svc](const httplib::Request& req, httplib::Response& res) {
            guarded(res, [&] {
              OverlayOptions layers;
              for (auto [name, flag] : {std::pair{"masks", &layers.masks},
                                        std::pair{"boxes", &layers.boxes},
                                        std::pair{"scores", &layers.scores}}) {
                if (!req.has_param(name)) continue;
                const std::string v = req.get_param_value(name);
                if (v == "1" || v == "true") {
                  *flag = true;
                } else if (v == "0" || v == "false") {
                  *flag = false;
                } else {
                  send_error(res, 400, std::string("query parameter '") + name + "' must be 0 or 1");
                  return;
                }
              }
              const auto png = svc.overlay_png(req.matches[1].str(), layers);
              res.status = 200;
              res.set_content(std::string(png.begin(), png.end()), "image/png");
            });
          });

  srv.Get("/api/v1/healthz", [&svc](const httplib::Request&, httplib::Response& res) {
    const auto run = svc.model_run_id();
    send_json(res, 200,
              {{"status", run ? "ok" : "no_model"},
               {"model_run_id", run ? json(*run) : json(nullptr)}});
  });

  srv.Post("/api/v1/admin/model", [&svc](const httplib::Request& req, httplib::Response& res) {
    guarded(res, [&] {
      const json body = json::parse(req.body, nullptr, false);
      if (body.is_discarded() || !body.is_object() || !body.contains("run_id") ||
          !body["run_id"].is_string()) {
        send_error(res, 400, "body must be {\"run_id\": \"...\"}");
        return;
      }
      send_json(res, 200, {{"model_run_id", svc.activate_model(body["run_id"].get<std::string>())}});
    });
  });
}

HttpServer::~HttpServer() { stop(); }

void HttpServer::listen(const std::string& addr) {
  const auto [host, port] = parse_listen_address(addr);
  if (!impl_->server.bind_to_port(host, port)) {
    throw IoError("cannot bind " + addr);
  }
  run();
}

int HttpServer::bind_ephemeral(const std::string& host) {
  const int port = impl_->server.bind_to_any_port(host);
  if (port < 0) throw IoError("cannot bind an ephemeral port on " + host);
  return port;
}

void HttpServer::run() { impl_->server.listen_after_bind(); }

void HttpServer::stop() {
  if (impl_->server.is_running()) impl_->server.stop();
}

void HttpServer::wait_until_ready() const { impl_->server.wait_until_ready(); }

}  // namespace leafscan
