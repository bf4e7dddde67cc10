#include <fstream>
#include <thread>

#include <gtest/gtest.h>

// Eigen must precede httplib: resolv.h defines _res as a macro.
#include "test_support.hpp"
#include "wordlens/study_http.hpp"

#include <httplib.h>
#include <json.hpp>

using namespace wordlens;
using namespace wordlens::study;
using nlohmann::json;
using testsupport::TempDir;

namespace {

json config_json(const std::filesystem::path& images, int n_test = 16, int n_per_class = 5) {
    json cfg{{"task_name", "http"}, {"n_images", 2 * n_per_class}, {"n_per_class", n_per_class}, {"rng_seed", 5},
             {"words_positive", {"asymmetric", "large", "dark"}}, {"words_negative", {"round", "smooth", "light"}},
             {"image_base_path", images.string()}};
    cfg["test_ids"] = json::array();
    cfg["ai_scores"] = json::object();
    for (int i = 0; i < n_test; ++i) {
        const std::string id = "h" + std::to_string(i);
        cfg["test_ids"].push_back({{"id", id}, {"label", i % 2}});
        cfg["ai_scores"][id] = i % 2 ? 0.875 : 0.125;
    }
    return cfg;
}

// Rejects any key that could carry ground truth or model output.
void scan_for_leaks(const json& j, const std::string& where) {
    if (j.is_object()) {
        for (const auto& [k, v] : j.items()) {
            for (const char* banned : {"label", "labels", "ai_score", "ai_scores", "score", "scores", "truth",
                                       "correct", "test_ids"}) {
                EXPECT_NE(k, banned) << "field '" << k << "' in " << where;
            }
            scan_for_leaks(v, where);
        }
    } else if (j.is_array()) {
        for (const auto& v : j) scan_for_leaks(v, where);
    }
}

class StudyHttp : public ::testing::Test {
protected:
    void SetUp() override {
        service_ = std::make_unique<StudyService>(data_.path());
        mount_routes(server_, *service_);
        port_ = server_.bind_to_any_port("127.0.0.1");
        ASSERT_GT(port_, 0);
        thread_ = std::thread([this] { server_.listen_after_bind(); });
        server_.wait_until_ready();
        client_ = std::make_unique<httplib::Client>("127.0.0.1", port_);
    }
    void TearDown() override {
        server_.stop();
        if (thread_.joinable()) thread_.join();
    }

    // Every JSON body returned passes through the leak scan.
    std::pair<int, json> post(const std::string& path, const json& body) {
        auto r = client_->Post(path, body.dump(), "application/json");
        EXPECT_TRUE(r);
        const auto j = json::parse(r->body);
        scan_for_leaks(j, "POST " + path);
        return {r->status, j};
    }
    std::pair<int, json> get(const std::string& path) {
        auto r = client_->Get(path);
        EXPECT_TRUE(r);
        const auto j = json::parse(r->body);
        scan_for_leaks(j, "GET " + path);
        return {r->status, j};
    }

    TempDir data_{"http"};
    TempDir images_{"http-img"};
    std::unique_ptr<StudyService> service_;
    httplib::Server server_;
    std::thread thread_;
    int port_ = 0;
    std::unique_ptr<httplib::Client> client_;
};

}  // namespace

TEST_F(StudyHttp, FullScriptedSession) {
    const auto cfg = config_json(images_.path());
    auto [st, study] = post("/studies", cfg);
    ASSERT_EQ(st, 201);
    const std::string sid_study = study.at("study_id");
    EXPECT_EQ(study.at("n_images"), 10);

    auto [st2, sess] = post("/studies/" + sid_study + "/sessions", {{"participant_id", "p"}, {"education_group", "degree"}});
    ASSERT_EQ(st2, 201);
    EXPECT_EQ(sess.at("phase"), "SESSION_1");
    EXPECT_EQ(sess.at("progress").at("total"), 20);
    const std::string sid = sess.at("session_id");

    std::map<std::string, int> truth;
    for (const auto& t : cfg.at("test_ids")) truth[t.at("id")] = t.at("label");

    for (int k = 0; k < 20; ++k) {
        auto [s, item] = get("/sessions/" + sid + "/next");
        ASSERT_EQ(s, 200);
        EXPECT_EQ(item.at("phase"), k < 10 ? "SESSION_1" : "SESSION_2");
        EXPECT_EQ(item.at("phase_start"), k == 0 || k == 10);
        if (k >= 10) {
            EXPECT_EQ(item.at("instructions").at("words_positive"), cfg.at("words_positive"));
            EXPECT_EQ(item.at("instructions").at("words_negative"), cfg.at("words_negative"));
        } else {
            EXPECT_FALSE(item.at("instructions").contains("words_positive"));
            EXPECT_FALSE(item.at("instructions").contains("words_negative"));
        }
        const std::string image = item.at("image_id");
        auto [s2, ack] = post("/sessions/" + sid + "/responses", {{"image_id", image}, {"choice", truth.at(image)}});
        ASSERT_EQ(s2, 200) << ack.dump();
        EXPECT_EQ(ack.at("progress").at("answered"), k + 1);
        auto [s3, dup] = post("/sessions/" + sid + "/responses", {{"image_id", image}, {"choice", 0}});
        EXPECT_EQ(s3, 409);
        EXPECT_TRUE(dup.contains("error"));
    }
    auto [s4, done] = get("/sessions/" + sid + "/next");
    EXPECT_EQ(s4, 409);
    EXPECT_EQ(done.at("phase"), "DONE");

    auto [s5, summary] = get("/studies/" + sid_study + "/summary");
    ASSERT_EQ(s5, 200);
    EXPECT_EQ(summary.at("n_complete"), 1);
}

TEST_F(StudyHttp, TwoParticipantsCompleteTheProtocol) {
    auto [st, study] = post("/studies", config_json(images_.path(), 60, 25));
    ASSERT_EQ(st, 201);
    const std::string id = study.at("study_id");
    for (const char* pid : {"r1", "r2"}) {
        auto [s, sess] = post("/studies/" + id + "/sessions", {{"participant_id", pid}});
        ASSERT_EQ(s, 201);
        const std::string sid = sess.at("session_id");
        for (int k = 0; k < 100; ++k) {
            auto [s1, item] = get("/sessions/" + sid + "/next");
            ASSERT_EQ(s1, 200);
            auto [s2, ack] = post("/sessions/" + sid + "/responses", {{"image_id", item.at("image_id")}, {"choice", k % 2}});
            ASSERT_EQ(s2, 200);
            EXPECT_EQ(ack.at("phase"), k < 49 ? "SESSION_1" : (k < 99 ? "SESSION_2" : "DONE"));
        }
        EXPECT_EQ(get("/sessions/" + sid + "/next").second.at("phase"), "DONE");
    }
    auto [s3, summary] = get("/studies/" + id + "/summary");
    ASSERT_EQ(s3, 200);
    EXPECT_EQ(summary.at("n_complete"), 2);
}

TEST_F(StudyHttp, ErrorStatuses) {
    auto [st, study] = post("/studies", config_json(images_.path()));
    ASSERT_EQ(st, 201);
    const std::string id = study.at("study_id");
    EXPECT_EQ(post("/studies", {{"task_name", "x"}}).first, 400);
    EXPECT_EQ(post("/studies/nope/sessions", {{"participant_id", "p"}}).first, 404);
    EXPECT_EQ(post("/studies/" + id + "/sessions", json::object()).first, 400);
    EXPECT_EQ(post("/studies/" + id + "/sessions", {{"participant_id", "p"}}).first, 201);
    EXPECT_EQ(post("/studies/" + id + "/sessions", {{"participant_id", "p"}}).first, 409);
    EXPECT_EQ(get("/sessions/nope/next").first, 404);
    EXPECT_EQ(get("/studies/" + id + "/summary").first, 409);
    const std::string sid = service_->create_session(id, "q").session_id;
    EXPECT_EQ(post("/sessions/" + sid + "/responses", {{"image_id", "h0"}, {"choice", "yes"}}).first, 400);
    auto bad = client_->Post("/sessions/" + sid + "/responses", "{not json", "application/json");
    ASSERT_TRUE(bad);
    EXPECT_EQ(bad->status, 400);
}

TEST_F(StudyHttp, ServesSampledImagesOnly) {
    auto [st, study] = post("/studies", config_json(images_.path()));
    ASSERT_EQ(st, 201);
    const auto sample = service_->study(study.at("study_id")).sample.ids;
    { std::ofstream(images_ / (sample[0] + ".jpg"), std::ios::binary) << "\xff\xd8jpeg"; }
    auto r = client_->Get("/images/" + sample[0]);
    ASSERT_TRUE(r);
    EXPECT_EQ(r->status, 200);
    EXPECT_EQ(r->get_header_value("Content-Type"), "image/jpeg");
    EXPECT_EQ(r->body, "\xff\xd8jpeg");
    EXPECT_EQ(r->get_header_value("Access-Control-Allow-Origin"), "*");
    EXPECT_EQ(client_->Get("/images/" + sample[1])->status, 404);
    EXPECT_EQ(client_->Get("/images/..%2Fsecret")->status, 404);
}

TEST(ContentType, ByExtension) {
    EXPECT_EQ(image_content_type("a.PNG"), "image/png");
    EXPECT_EQ(image_content_type("a.jpeg"), "image/jpeg");
    EXPECT_EQ(image_content_type("a.bin"), "application/octet-stream");
}
