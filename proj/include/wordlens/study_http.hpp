#pragma once

#include "wordlens/study.hpp"

namespace httplib {
class Server;
}

namespace wordlens::study {

/// Registers the study JSON API on `server`:
///   POST /studies                      body: StudyConfig            -> 201 {study_id, n_images, sampling}
///   POST /studies/{id}/sessions        body: {participant_id, education_group?} -> 201 {session_id, phase, total}
///   GET  /sessions/{sid}/next                                       -> 200 next item | 409 when DONE
///   POST /sessions/{sid}/responses     body: {image_id, choice}     -> 200 ack | 409 duplicate/out of order
///   GET  /studies/{id}/summary                                      -> 200 summary | 409 no completed sessions
///   GET  /images/{image_id}                                         -> image bytes
/// Errors are {"error": message}. `service` must outlive the server.
void mount_routes(httplib::Server& server, StudyService& service);

/// Content type by file extension.
std::string image_content_type(const std::filesystem::path& path);

}  // namespace wordlens::study
