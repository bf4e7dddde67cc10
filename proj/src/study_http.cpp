#include "wordlens/study_http.hpp"

#include <algorithm>
#include <cctype>

#include <httplib.h>
#include <json.hpp>

#include "wordlens/util.hpp"

namespace wordlens::study {

namespace {

using ojson = nlohmann::ordered_json;

constexpr const char* kJson = "application/json";

void send_error(httplib::Response& res, int status, const std::string& message, const ojson& extra = {}) {
    ojson j{{"error", message}};
    if (extra.is_object()) j.update(extra);
    res.status = status;
    res.set_content(j.dump(), kJson);
}

int status_for(StudyError::Kind kind) {
    switch (kind) {
        case StudyError::Kind::NotFound: return 404;
        case StudyError::Kind::Conflict: return 409;
        case StudyError::Kind::Invalid: return 400;
    }
    return 400;
}

// Translates the service's exceptions into JSON error responses.
template <typename F>
void guarded(httplib::Response& res, F&& f) {
    try {
        f();
    } catch (const StudyError& e) {
        send_error(res, status_for(e.kind()), e.what());
    } catch (const nlohmann::json::exception& e) {
        send_error(res, 400, std::string("malformed JSON body: ") + e.what());
    } catch (const ValidationError& e) {
        send_error(res, 400, e.what());
    } catch (const std::exception& e) {
        send_error(res, 500, e.what());
    }
}

}  // namespace

std::string image_content_type(const std::filesystem::path& path) {
    std::string ext = path.extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
    if (ext == ".png") return "image/png";
    if (ext == ".jpg" || ext == ".jpeg") return "image/jpeg";
    if (ext == ".gif") return "image/gif";
    if (ext == ".webp") return "image/webp";
    if (ext == ".bmp") return "image/bmp";
    if (ext == ".tif" || ext == ".tiff") return "image/tiff";
    return "application/octet-stream";
}

void mount_routes(httplib::Server& server, StudyService& service) {
    server.set_default_headers({{"Access-Control-Allow-Origin", "*"}, {"Cache-Control", "no-store"}});
    server.Options(R"(.*)", [](const httplib::Request&, httplib::Response& res) {
        res.set_header("Access-Control-Allow-Methods", "GET, POST, OPTIONS");
        res.set_header("Access-Control-Allow-Headers", "Content-Type");
        res.status = 204;
    });

    server.Post("/studies", [&service](const httplib::Request& req, httplib::Response& res) {
        guarded(res, [&] {
            const auto cfg = parse_study_config(req.body);
            const auto id = service.load_study(cfg);
            const auto rec = service.study(id);
            ojson j{{"study_id", id},
                    {"task_name", rec.config.task_name},
                    {"n_images", rec.sample.ids.size()},
                    {"sampling",
                     {{"attempts", rec.sample.attempts},
                      {"sample_accuracy", rec.sample.sample_accuracy},
                      {"full_accuracy", rec.sample.full_accuracy},
                      {"tolerance_met", rec.sample.tolerance_met}}}};
            res.status = 201;
            res.set_content(j.dump(), kJson);
        });
    });

    server.Post(R"(/studies/([^/]+)/sessions)", [&service](const httplib::Request& req, httplib::Response& res) {
        guarded(res, [&] {
            const auto body = nlohmann::json::parse(req.body.empty() ? "{}" : req.body);
            const auto pid = body.at("participant_id").get<std::string>();
            const auto group = parse_education_group(body.value("education_group", std::string{}));
            const auto s = service.create_session(req.matches[1].str(), pid, group);
            ojson j{{"session_id", s.session_id},
                    {"study_id", s.study_id},
                    {"phase", to_string(s.phase())},
                    {"progress", {{"answered", s.answered()}, {"total", s.total()}}}};
            res.status = 201;
            res.set_content(j.dump(), kJson);
        });
    });

    server.Get(R"(/sessions/([^/]+)/next)", [&service](const httplib::Request& req, httplib::Response& res) {
        guarded(res, [&] {
            const auto sid = req.matches[1].str();
            const auto s = service.session(sid);
            if (s.phase() == Phase::Done) {
                send_error(res, 409, "session is complete",
                           ojson{{"phase", "DONE"}, {"progress", {{"answered", s.answered()}, {"total", s.total()}}}});
                return;
            }
            res.set_content(next_item_to_json(service.next_item(sid)), kJson);
        });
    });

    server.Post(R"(/sessions/([^/]+)/responses)", [&service](const httplib::Request& req, httplib::Response& res) {
        guarded(res, [&] {
            const auto body = nlohmann::json::parse(req.body);
            const auto& choice = body.at("choice");
            if (!choice.is_number_integer()) throw StudyError(StudyError::Kind::Invalid, "choice must be 0 or 1");
            const auto ack = service.submit_response(req.matches[1].str(), body.at("image_id").get<std::string>(),
                                                     choice.get<int>());
            res.set_content(ack_to_json(ack), kJson);
        });
    });

    server.Get(R"(/studies/([^/]+)/summary)", [&service](const httplib::Request& req, httplib::Response& res) {
        guarded(res, [&] { res.set_content(summary_to_json(service.summary(req.matches[1].str())), kJson); });
    });

    server.Get(R"(/images/([^/]+))", [&service](const httplib::Request& req, httplib::Response& res) {
        guarded(res, [&] {
            const auto path = service.image_path(req.matches[1].str());
            if (!path) {
                send_error(res, 404, "image not found");
                return;
            }
            res.set_content(read_file(*path), image_content_type(*path));
        });
    });
}

}  // namespace wordlens::study
