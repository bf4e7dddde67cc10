#include "wordlens/study.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstring>
#include <random>
#include <set>

#include <fcntl.h>
#include <unistd.h>

#include <json.hpp>

#include "wordlens/probe.hpp"
#include "wordlens/util.hpp"

namespace wordlens::study {

namespace fs = std::filesystem;
using ojson = nlohmann::ordered_json;

namespace {

constexpr const char* kEventLog = "events.jsonl";
constexpr const char* kSessionsFile = "sessions.json";
constexpr const char* kStudiesDir = "studies";

StudyError invalid(const std::string& m) { return StudyError(StudyError::Kind::Invalid, m); }
StudyError not_found(const std::string& m) { return StudyError(StudyError::Kind::NotFound, m); }
StudyError conflict(const std::string& m) { return StudyError(StudyError::Kind::Conflict, m); }

Phase parse_phase(const std::string& s) {
    if (s == "SESSION_1") return Phase::Session1;
    if (s == "SESSION_2") return Phase::Session2;
    if (s == "DONE") return Phase::Done;
    throw invalid("unknown phase: " + s);
}

std::string substitute(std::string text, const std::string& key, const std::string& value) {
    for (auto pos = text.find(key); pos != std::string::npos; pos = text.find(key, pos + value.size())) {
        text.replace(pos, key.size(), value);
    }
    return text;
}

std::string render(const std::string& tmpl, const StudyConfig& cfg) {
    return substitute(substitute(tmpl, "{negative}", cfg.negative_name), "{positive}", cfg.positive_name);
}

ojson sample_to_json(const SampleResult& s) {
    return {{"ids", s.ids},
            {"attempts", s.attempts},
            {"sample_accuracy", s.sample_accuracy},
            {"full_accuracy", s.full_accuracy},
            {"tolerance_met", s.tolerance_met}};
}

SampleResult sample_from_json(const nlohmann::json& j) {
    SampleResult s;
    s.ids = j.at("ids").get<std::vector<std::string>>();
    s.attempts = j.at("attempts").get<std::size_t>();
    s.sample_accuracy = j.at("sample_accuracy").get<double>();
    s.full_accuracy = j.at("full_accuracy").get<double>();
    s.tolerance_met = j.at("tolerance_met").get<bool>();
    return s;
}

const std::vector<std::string>& order_for(const StudySession& s, Phase p) {
    return p == Phase::Session1 ? s.order_s1 : s.order_s2;
}
std::vector<Response>& responses_for(StudySession& s, Phase p) {
    return p == Phase::Session1 ? s.responses_s1 : s.responses_s2;
}
const std::vector<Response>& responses_for(const StudySession& s, Phase p) {
    return p == Phase::Session1 ? s.responses_s1 : s.responses_s2;
}

// Checks that (image_id, phase) is the next expected response; shared by live submission and log replay.
void check_next(const StudySession& s, Phase phase, const std::string& image_id) {
    const Phase cur = s.phase();
    if (cur == Phase::Done) throw conflict("session is complete");
    const auto& done = responses_for(s, cur);
    for (const auto& r : done) {
        if (r.image_id == image_id) throw conflict("duplicate response for image " + image_id + " in " + to_string(cur));
    }
    const auto& order = order_for(s, cur);
    if (std::find(order.begin(), order.end(), image_id) == order.end()) throw not_found("image not in this study: " + image_id);
    if (phase != cur) throw conflict("response is for " + to_string(phase) + " but the session is in " + to_string(cur));
    if (order[done.size()] != image_id) {
        throw conflict("out-of-order response: expected " + order[done.size()] + ", got " + image_id);
    }
}

void apply_response(StudySession& s, Phase phase, Response r) {
    check_next(s, phase, r.image_id);
    responses_for(s, phase).push_back(std::move(r));
}

std::map<std::string, int> as_map(const std::vector<Response>& rs, std::size_t begin, std::size_t end) {
    std::map<std::string, int> out;
    for (std::size_t i = begin; i < end; ++i) out.emplace(rs[i].image_id, rs[i].choice);
    return out;
}

std::size_t count_correct(const std::vector<Response>& rs, const LabelSet& labels) {
    std::size_t c = 0;
    for (const auto& r : rs) c += labels.at(r.image_id) == r.choice ? 1 : 0;
    return c;
}

double mean_of(const std::vector<double>& v) {
    double s = 0.0;
    for (double x : v) s += x;
    return s / static_cast<double>(v.size());
}

ojson session_meta_to_json(const StudySession& s) {
    return {{"session_id", s.session_id},
            {"study_id", s.study_id},
            {"participant_id", s.participant_id},
            {"education_group", to_string(s.education_group)},
            {"order_s1", s.order_s1},
            {"order_s2", s.order_s2}};
}

}  // namespace

std::string to_string(Phase p) {
    switch (p) {
        case Phase::Session1: return "SESSION_1";
        case Phase::Session2: return "SESSION_2";
        case Phase::Done: return "DONE";
    }
    return "DONE";
}

std::string to_string(EducationGroup g) {
    switch (g) {
        case EducationGroup::Degree: return "degree";
        case EducationGroup::NoDegree: return "no_degree";
        case EducationGroup::Unspecified: return "unspecified";
    }
    return "unspecified";
}

EducationGroup parse_education_group(const std::string& s) {
    if (s.empty() || s == "unspecified") return EducationGroup::Unspecified;
    if (s == "degree") return EducationGroup::Degree;
    if (s == "no_degree") return EducationGroup::NoDegree;
    throw invalid("education_group must be degree, no_degree or unspecified");
}

void StudyConfig::validate() const {
    if (n_per_class == 0) throw invalid("n_per_class must be positive");
    if (n_per_class * 2 != n_images) throw invalid("n_images must equal 2 * n_per_class");
    if (!(accuracy_tolerance >= 0.0)) throw invalid("accuracy_tolerance must be non-negative");
    if (max_attempts == 0) throw invalid("max_attempts must be positive");
    if (words_positive.empty() || words_negative.empty()) throw invalid("session 2 word lists must be non-empty");
    std::set<std::string> seen;
    for (const auto& id : test_ids) {
        if (!seen.insert(id).second) throw invalid("duplicate test id: " + id);
        if (!labels.entries.count(id)) throw invalid("test id without label: " + id);
        auto s = ai_scores.find(id);
        if (s == ai_scores.end()) throw invalid("test id without AI score: " + id);
        if (!std::isfinite(s->second)) throw invalid("non-finite AI score for " + id);
    }
}

std::string study_config_to_json(const StudyConfig& cfg) {
    ojson j;
    j["task_name"] = cfg.task_name;
    j["positive_name"] = cfg.positive_name;
    j["negative_name"] = cfg.negative_name;
    j["test_ids"] = ojson::array();
    for (const auto& id : cfg.test_ids) j["test_ids"].push_back({{"id", id}, {"label", cfg.labels.at(id)}});
    ojson scores = ojson::object();
    for (const auto& id : cfg.test_ids) scores[id] = cfg.ai_scores.at(id);
    j["ai_scores"] = scores;
    j["n_images"] = cfg.n_images;
    j["n_per_class"] = cfg.n_per_class;
    j["accuracy_tolerance"] = cfg.accuracy_tolerance;
    j["ai_threshold"] = cfg.ai_threshold;
    j["max_attempts"] = cfg.max_attempts;
    j["words_positive"] = cfg.words_positive;
    j["words_negative"] = cfg.words_negative;
    j["rng_seed"] = cfg.rng_seed;
    j["image_base_path"] = cfg.image_base_path.string();
    j["session1_instructions"] = cfg.session1_instructions;
    j["session2_instructions"] = cfg.session2_instructions;
    return j.dump(2) + "\n";
}

StudyConfig parse_study_config(std::string_view text) {
    StudyConfig cfg;
    try {
        auto j = nlohmann::json::parse(text);
        cfg.task_name = j.at("task_name").get<std::string>();
        cfg.positive_name = j.value("positive_name", cfg.positive_name);
        cfg.negative_name = j.value("negative_name", cfg.negative_name);
        for (const auto& t : j.at("test_ids")) {
            const auto id = t.at("id").get<std::string>();
            const int label = t.at("label").get<int>();
            if (label != 0 && label != 1) throw invalid("label for " + id + " must be 0 or 1");
            cfg.test_ids.push_back(id);
            if (!cfg.labels.entries.emplace(id, label).second) throw invalid("duplicate test id: " + id);
        }
        cfg.ai_scores = j.at("ai_scores").get<std::map<std::string, double>>();
        cfg.n_images = j.value("n_images", cfg.n_images);
        cfg.n_per_class = j.value("n_per_class", cfg.n_per_class);
        cfg.accuracy_tolerance = j.value("accuracy_tolerance", cfg.accuracy_tolerance);
        cfg.ai_threshold = j.value("ai_threshold", cfg.ai_threshold);
        cfg.max_attempts = j.value("max_attempts", cfg.max_attempts);
        cfg.words_positive = j.at("words_positive").get<std::vector<std::string>>();
        cfg.words_negative = j.at("words_negative").get<std::vector<std::string>>();
        cfg.rng_seed = j.at("rng_seed").get<std::uint64_t>();
        cfg.image_base_path = j.value("image_base_path", std::string{});
        cfg.session1_instructions = j.value("session1_instructions", cfg.session1_instructions);
        cfg.session2_instructions = j.value("session2_instructions", cfg.session2_instructions);
    } catch (const nlohmann::json::exception& e) {
        throw invalid(std::string("invalid study config: ") + e.what());
    }
    cfg.labels.positive_name = cfg.positive_name;
    cfg.labels.negative_name = cfg.negative_name;
    cfg.validate();
    return cfg;
}

StudyConfig read_study_config(const fs::path& path) { return parse_study_config(read_file(path)); }

std::string study_id_for(const StudyConfig& cfg) { return "study-" + sha256_hex(study_config_to_json(cfg)).substr(0, 12); }

SampleResult stratified_sample(const StudyConfig& cfg) {
    cfg.validate();
    std::vector<std::string> pos, neg;
    for (const auto& id : cfg.test_ids) (cfg.labels.at(id) == 1 ? pos : neg).push_back(id);
    if (pos.size() < cfg.n_per_class || neg.size() < cfg.n_per_class) {
        throw invalid("test set has " + std::to_string(pos.size()) + " positives and " + std::to_string(neg.size()) +
                      " negatives; need " + std::to_string(cfg.n_per_class) + " of each");
    }
    std::map<std::string, bool> ai_correct;
    std::size_t full_correct = 0;
    for (const auto& id : cfg.test_ids) {
        const int pred = cfg.ai_scores.at(id) >= cfg.ai_threshold ? 1 : 0;
        const bool ok = pred == cfg.labels.at(id);
        ai_correct.emplace(id, ok);
        full_correct += ok ? 1 : 0;
    }
    const double full_acc = static_cast<double>(full_correct) / static_cast<double>(cfg.test_ids.size());

    std::mt19937_64 rng(derive_seed(cfg.rng_seed, "stratified-sample"));
    // Partial Fisher-Yates: the first k slots become a uniform draw without replacement.
    auto draw = [&](std::vector<std::string>& pool, std::size_t k) {
        for (std::size_t i = 0; i < k; ++i) {
            const auto j = i + static_cast<std::size_t>(uniform_index(rng, pool.size() - i));
            std::swap(pool[i], pool[j]);
        }
        return std::vector<std::string>(pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(k));
    };

    SampleResult best;
    double best_gap = std::numeric_limits<double>::infinity();
    for (std::size_t attempt = 1; attempt <= cfg.max_attempts; ++attempt) {
        auto ids = draw(neg, cfg.n_per_class);
        auto p = draw(pos, cfg.n_per_class);
        ids.insert(ids.end(), p.begin(), p.end());
        std::size_t correct = 0;
        for (const auto& id : ids) correct += ai_correct.at(id) ? 1 : 0;
        const double acc = static_cast<double>(correct) / static_cast<double>(ids.size());
        const double gap = std::abs(acc - full_acc);
        if (gap < best_gap) {
            best_gap = gap;
            best = SampleResult{std::move(ids), attempt, acc, full_acc, false};
        }
        if (gap <= cfg.accuracy_tolerance + 1e-12) {
            best.tolerance_met = true;
            best.attempts = attempt;
            return best;
        }
    }
    best.attempts = cfg.max_attempts;
    return best;
}

Phase StudySession::phase() const {
    if (responses_s1.size() < order_s1.size()) return Phase::Session1;
    if (responses_s2.size() < order_s2.size()) return Phase::Session2;
    return Phase::Done;
}

StudySummary summarize(const std::string& study_id, const StudyConfig& cfg, const std::vector<StudySession>& sessions) {
    StudySummary out;
    out.study_id = study_id;
    out.task_name = cfg.task_name;

    std::vector<double> s1, s2, s1a, s1b, s2a, s2b;
    std::size_t pooled_c1 = 0, pooled_n1 = 0, pooled_c2 = 0, pooled_n2 = 0;
    std::map<std::string, std::vector<std::pair<double, double>>> groups;

    for (const auto& s : sessions) {
        if (s.study_id != study_id) continue;
        ParticipantSummary p;
        p.session_id = s.session_id;
        p.participant_id = s.participant_id;
        p.education_group = s.education_group;
        p.answered = s.answered();
        p.complete = s.phase() == Phase::Done;
        if (!p.complete) {
            ++out.n_incomplete;
            out.participants.push_back(std::move(p));
            continue;
        }
        ++out.n_complete;
        const auto& r1 = s.responses_s1;
        const auto& r2 = s.responses_s2;
        const std::size_t h1 = r1.size() / 2, h2 = r2.size() / 2;
        p.acc_s1 = reader_accuracy(as_map(r1, 0, r1.size()), cfg.labels);
        p.acc_s2 = reader_accuracy(as_map(r2, 0, r2.size()), cfg.labels);
        p.acc_s1_first_half = reader_accuracy(as_map(r1, 0, h1), cfg.labels);
        p.acc_s1_second_half = reader_accuracy(as_map(r1, h1, r1.size()), cfg.labels);
        p.acc_s2_first_half = reader_accuracy(as_map(r2, 0, h2), cfg.labels);
        p.acc_s2_second_half = reader_accuracy(as_map(r2, h2, r2.size()), cfg.labels);
        p.correct_s1 = count_correct(r1, cfg.labels);
        p.correct_s2 = count_correct(r2, cfg.labels);

        s1.push_back(p.acc_s1);
        s2.push_back(p.acc_s2);
        s1a.push_back(p.acc_s1_first_half);
        s1b.push_back(p.acc_s1_second_half);
        s2a.push_back(p.acc_s2_first_half);
        s2b.push_back(p.acc_s2_second_half);
        pooled_c1 += p.correct_s1;
        pooled_n1 += r1.size();
        pooled_c2 += p.correct_s2;
        pooled_n2 += r2.size();
        groups[to_string(s.education_group)].emplace_back(p.acc_s1, p.acc_s2);
        out.participants.push_back(std::move(p));
    }
    if (out.n_complete == 0) throw conflict("no completed sessions for study " + study_id);

    out.session1 = {mean_of(s1), mean_of(s1a), mean_of(s1b), accuracy_adjusted_wald(pooled_c1, pooled_n1)};
    out.session2 = {mean_of(s2), mean_of(s2a), mean_of(s2b), accuracy_adjusted_wald(pooled_c2, pooled_n2)};
    try {
        out.improvement = paired_t_one_sided(s1, s2);
    } catch (const std::exception& e) {
        out.improvement_note = std::string("not computable: ") + e.what();
    }
    for (const auto& [name, accs] : groups) {
        GroupAggregate g;
        g.n = accs.size();
        std::vector<double> a, b;
        for (const auto& [x, y] : accs) {
            a.push_back(x);
            b.push_back(y);
        }
        g.acc_s1 = mean_of(a);
        g.acc_s2 = mean_of(b);
        out.education_groups.emplace(name, g);
    }
    return out;
}

std::string summary_to_json(const StudySummary& s) {
    auto prop = [](const ProportionResult& r) {
        return ojson{{"successes", r.successes}, {"n", r.n},           {"estimate", r.estimate},
                     {"center", r.center},       {"ci_low", r.ci_low}, {"ci_high", r.ci_high},
                     {"alpha", r.alpha},         {"method", "adjusted_wald"}};
    };
    auto agg = [&](const SessionAggregate& a) {
        return ojson{{"mean_accuracy", a.mean_accuracy},
                     {"first_half_mean", a.first_half_mean},
                     {"second_half_mean", a.second_half_mean},
                     {"pooled", prop(a.pooled)}};
    };
    ojson j;
    j["study_id"] = s.study_id;
    j["task_name"] = s.task_name;
    j["n_complete"] = s.n_complete;
    j["n_incomplete"] = s.n_incomplete;
    j["participants"] = ojson::array();
    for (const auto& p : s.participants) {
        ojson pj{{"session_id", p.session_id},
                 {"participant_id", p.participant_id},
                 {"education_group", to_string(p.education_group)},
                 {"complete", p.complete},
                 {"answered", p.answered}};
        if (p.complete) {
            pj["acc_s1"] = p.acc_s1;
            pj["acc_s2"] = p.acc_s2;
            pj["acc_s1_first_half"] = p.acc_s1_first_half;
            pj["acc_s1_second_half"] = p.acc_s1_second_half;
            pj["acc_s2_first_half"] = p.acc_s2_first_half;
            pj["acc_s2_second_half"] = p.acc_s2_second_half;
        }
        j["participants"].push_back(std::move(pj));
    }
    ojson aggregate;
    aggregate["session_1"] = agg(s.session1);
    aggregate["session_2"] = agg(s.session2);
    if (s.improvement) {
        aggregate["improvement"] = {{"computable", true},
                                    {"n", s.improvement->n},
                                    {"mean_diff", s.improvement->mean_diff},
                                    {"t_stat", s.improvement->t_stat},
                                    {"df", s.improvement->df},
                                    {"p_one_sided", s.improvement->p_one_sided},
                                    {"test", "paired_t_one_sided"}};
    } else {
        aggregate["improvement"] = {{"computable", false}, {"reason", s.improvement_note}};
    }
    j["aggregate"] = std::move(aggregate);
    ojson groups = ojson::object();
    for (const auto& [name, g] : s.education_groups) groups[name] = {{"n", g.n}, {"acc_s1", g.acc_s1}, {"acc_s2", g.acc_s2}};
    j["education_groups"] = std::move(groups);
    if (s.n_incomplete > 0) {
        j["flags"] = {std::to_string(s.n_incomplete) + " incomplete session(s) excluded from aggregates"};
    } else {
        j["flags"] = ojson::array();
    }
    return j.dump(2) + "\n";
}

StudyState load_state(const fs::path& data_dir) {
    StudyState st;
    const auto studies_dir = data_dir / kStudiesDir;
    if (fs::exists(studies_dir)) {
        std::vector<fs::path> files;
        for (const auto& e : fs::directory_iterator(studies_dir)) {
            if (e.path().extension() == ".json") files.push_back(e.path());
        }
        std::sort(files.begin(), files.end());
        for (const auto& f : files) {
            try {
                auto j = nlohmann::json::parse(read_file(f));
                StudyRecord rec{parse_study_config(j.at("config").dump()), sample_from_json(j.at("sample"))};
                st.studies.emplace(f.stem().string(), std::move(rec));
            } catch (const nlohmann::json::exception& e) {
                throw ValidationError("corrupt study file " + f.string() + ": " + e.what());
            }
        }
    }

    std::map<std::string, std::size_t> index;
    const auto sessions_file = data_dir / kSessionsFile;
    if (fs::exists(sessions_file)) {
        try {
            auto j = nlohmann::json::parse(read_file(sessions_file));
            for (const auto& sj : j.at("sessions")) {
                StudySession s;
                s.session_id = sj.at("session_id").get<std::string>();
                s.study_id = sj.at("study_id").get<std::string>();
                s.participant_id = sj.at("participant_id").get<std::string>();
                s.education_group = parse_education_group(sj.at("education_group").get<std::string>());
                s.order_s1 = sj.at("order_s1").get<std::vector<std::string>>();
                s.order_s2 = sj.at("order_s2").get<std::vector<std::string>>();
                if (!st.studies.count(s.study_id)) throw ValidationError("session " + s.session_id + " references unknown study");
                index.emplace(s.session_id, st.sessions.size());
                st.sessions.push_back(std::move(s));
            }
        } catch (const nlohmann::json::exception& e) {
            throw ValidationError("corrupt sessions snapshot: " + std::string(e.what()));
        }
    }

    const auto log_file = data_dir / kEventLog;
    if (fs::exists(log_file)) {
        const std::string log = read_file(log_file);
        std::size_t pos = 0, line_no = 0;
        while (pos < log.size()) {
            const auto nl = log.find('\n', pos);
            const bool terminated = nl != std::string::npos;
            const std::string line = log.substr(pos, terminated ? nl - pos : std::string::npos);
            pos = terminated ? nl + 1 : log.size();
            ++line_no;
            if (line.empty()) continue;
            nlohmann::json ev;
            try {
                ev = nlohmann::json::parse(line);
            } catch (const nlohmann::json::exception&) {
                // A torn final write was never acknowledged.
                if (!terminated) break;
                throw ValidationError("corrupt event log at line " + std::to_string(line_no));
            }
            try {
                const auto sid = ev.at("session_id").get<std::string>();
                auto it = index.find(sid);
                if (it == index.end()) throw ValidationError("event for unknown session " + sid);
                Response r{ev.at("image_id").get<std::string>(), ev.at("choice").get<int>(), ev.at("ts").get<std::int64_t>()};
                apply_response(st.sessions[it->second], parse_phase(ev.at("phase").get<std::string>()), std::move(r));
            } catch (const std::exception& e) {
                throw ValidationError("invalid event at line " + std::to_string(line_no) + ": " + e.what());
            }
        }
    }
    return st;
}

StudyService::StudyService(fs::path data_dir, Clock clock) : data_dir_(std::move(data_dir)), clock_(std::move(clock)) {
    if (!clock_) {
        clock_ = [] {
            return std::chrono::duration_cast<std::chrono::milliseconds>(std::chrono::system_clock::now().time_since_epoch())
                .count();
        };
    }
    fs::create_directories(data_dir_ / kStudiesDir);
    state_ = load_state(data_dir_);
    for (std::size_t i = 0; i < state_.sessions.size(); ++i) session_index_.emplace(state_.sessions[i].session_id, i);
    const auto log_path = data_dir_ / kEventLog;
    // Drop a torn final line so the next append starts on a fresh line.
    if (fs::exists(log_path)) {
        const std::string log = read_file(log_path);
        if (!log.empty() && log.back() != '\n') {
            const auto keep = log.rfind('\n');
            fs::resize_file(log_path, keep == std::string::npos ? 0 : keep + 1);
        }
    }
    log_fd_ = ::open(log_path.c_str(), O_WRONLY | O_APPEND | O_CREAT | O_CLOEXEC, 0644);
    if (log_fd_ < 0) throw std::runtime_error("cannot open event log " + log_path.string() + ": " + std::strerror(errno));
}

StudyService::~StudyService() {
    if (log_fd_ >= 0) ::close(log_fd_);
}

std::string StudyService::load_study(const StudyConfig& cfg) {
    cfg.validate();
    const auto id = study_id_for(cfg);
    std::unique_lock lock(mutex_);
    if (state_.studies.count(id)) return id;
    auto sample = stratified_sample(cfg);
    ojson j;
    j["config"] = ojson::parse(study_config_to_json(cfg));
    j["sample"] = sample_to_json(sample);
    write_file_atomic(data_dir_ / kStudiesDir / (id + ".json"), j.dump(2) + "\n");
    state_.studies.emplace(id, StudyRecord{cfg, std::move(sample)});
    return id;
}

StudyRecord StudyService::study(const std::string& study_id) const {
    std::shared_lock lock(mutex_);
    auto it = state_.studies.find(study_id);
    if (it == state_.studies.end()) throw not_found("unknown study: " + study_id);
    return it->second;
}

std::vector<std::string> StudyService::study_ids() const {
    std::shared_lock lock(mutex_);
    std::vector<std::string> out;
    for (const auto& [id, rec] : state_.studies) out.push_back(id);
    return out;
}

void StudyService::persist_sessions_locked() const {
    ojson j;
    j["sessions"] = ojson::array();
    for (const auto& s : state_.sessions) j["sessions"].push_back(session_meta_to_json(s));
    write_file_atomic(data_dir_ / kSessionsFile, j.dump(2) + "\n");
}

StudySession StudyService::create_session(const std::string& study_id, const std::string& participant_id,
                                          EducationGroup group) {
    if (participant_id.empty()) throw invalid("participant_id must be non-empty");
    std::unique_lock lock(mutex_);
    auto st = state_.studies.find(study_id);
    if (st == state_.studies.end()) throw not_found("unknown study: " + study_id);
    for (const auto& s : state_.sessions) {
        if (s.study_id == study_id && s.participant_id == participant_id) {
            throw conflict("participant already has a session in this study: " + participant_id);
        }
    }
    const auto& cfg = st->second.config;
    StudySession s;
    s.study_id = study_id;
    s.participant_id = participant_id;
    s.education_group = group;
    s.session_id = "sess-" + sha256_hex(study_id + '\x1f' + participant_id + '\x1f' + std::to_string(cfg.rng_seed)).substr(0, 20);
    s.order_s1 = st->second.sample.ids;
    s.order_s2 = st->second.sample.ids;
    std::mt19937_64 rng1(derive_seed(cfg.rng_seed, "session1:" + participant_id));
    std::mt19937_64 rng2(derive_seed(cfg.rng_seed, "session2:" + participant_id));
    seeded_shuffle(s.order_s1, rng1);
    seeded_shuffle(s.order_s2, rng2);

    state_.sessions.push_back(s);
    session_index_.emplace(s.session_id, state_.sessions.size() - 1);
    try {
        persist_sessions_locked();
    } catch (...) {
        session_index_.erase(s.session_id);
        state_.sessions.pop_back();
        throw;
    }
    return s;
}

StudySession& StudyService::session_locked(const std::string& session_id) {
    auto it = session_index_.find(session_id);
    if (it == session_index_.end()) throw not_found("unknown session: " + session_id);
    return state_.sessions[it->second];
}

const StudySession& StudyService::session_locked(const std::string& session_id) const {
    auto it = session_index_.find(session_id);
    if (it == session_index_.end()) throw not_found("unknown session: " + session_id);
    return state_.sessions[it->second];
}

StudySession StudyService::session(const std::string& session_id) const {
    std::shared_lock lock(mutex_);
    return session_locked(session_id);
}

NextItem StudyService::next_item(const std::string& session_id) const {
    std::shared_lock lock(mutex_);
    const auto& s = session_locked(session_id);
    const Phase phase = s.phase();
    if (phase == Phase::Done) throw conflict("session is complete");
    const auto& cfg = state_.studies.at(s.study_id).config;
    const auto& order = order_for(s, phase);
    const auto& done = responses_for(s, phase);

    NextItem item;
    item.session_id = s.session_id;
    item.phase = phase;
    item.image_id = order[done.size()];
    item.image_ref = "/images/" + item.image_id;
    item.answered = s.answered();
    item.total = s.total();
    item.phase_answered = done.size();
    item.phase_total = order.size();
    item.phase_start = done.empty();
    item.positive_name = cfg.positive_name;
    item.negative_name = cfg.negative_name;
    if (phase == Phase::Session1) {
        item.instructions.text = render(cfg.session1_instructions, cfg);
    } else {
        item.instructions.text = render(cfg.session2_instructions, cfg);
        item.instructions.words_positive = cfg.words_positive;
        item.instructions.words_negative = cfg.words_negative;
    }
    return item;
}

Ack StudyService::submit_response(const std::string& session_id, const std::string& image_id, int choice) {
    if (choice != 0 && choice != 1) throw invalid("choice must be 0 or 1");
    std::unique_lock lock(mutex_);
    auto& s = session_locked(session_id);
    const Phase phase = s.phase();
    check_next(s, phase, image_id);

    Response r{image_id, choice, clock_()};
    ojson ev;
    ev["ts"] = r.ts;
    ev["session_id"] = s.session_id;
    ev["phase"] = to_string(phase);
    ev["image_id"] = image_id;
    ev["choice"] = choice;
    const std::string line = ev.dump() + "\n";
    // Write-ahead: the response is on disk before it is applied or acknowledged.
    const off_t start = ::lseek(log_fd_, 0, SEEK_END);
    std::size_t written = 0;
    while (written < line.size()) {
        const auto n = ::write(log_fd_, line.data() + written, line.size() - written);
        if (n < 0) {
            if (errno == EINTR) continue;
            const std::string err = std::strerror(errno);
            // Roll back the partial line; if that fails too, replay drops it as torn.
            if (start >= 0) {
                const int rc = ::ftruncate(log_fd_, start);
                static_cast<void>(rc);
            }
            throw std::runtime_error("event log write failed: " + err);
        }
        written += static_cast<std::size_t>(n);
    }
    if (::fsync(log_fd_) != 0) throw std::runtime_error(std::string("event log fsync failed: ") + std::strerror(errno));

    responses_for(s, phase).push_back(std::move(r));
    return Ack{s.session_id, image_id, s.phase(), s.answered(), s.total()};
}

StudySummary StudyService::summary(const std::string& study_id) const {
    std::shared_lock lock(mutex_);
    auto it = state_.studies.find(study_id);
    if (it == state_.studies.end()) throw not_found("unknown study: " + study_id);
    return summarize(study_id, it->second.config, state_.sessions);
}

std::optional<fs::path> StudyService::image_path(const std::string& image_id) const {
    if (image_id.empty() || image_id.front() == '.' || image_id.find('/') != std::string::npos ||
        image_id.find('\\') != std::string::npos || image_id.find("..") != std::string::npos) {
        return std::nullopt;
    }
    std::shared_lock lock(mutex_);
    for (const auto& [id, rec] : state_.studies) {
        const auto& ids = rec.sample.ids;
        if (std::find(ids.begin(), ids.end(), image_id) == ids.end()) continue;
        if (rec.config.image_base_path.empty()) continue;
        const auto base = rec.config.image_base_path / image_id;
        if (fs::is_regular_file(base)) return base;
        for (const char* ext : {".png", ".jpg", ".jpeg", ".webp", ".gif", ".bmp", ".tif", ".tiff"}) {
            auto p = base;
            p += ext;
            if (fs::is_regular_file(p)) return p;
        }
    }
    return std::nullopt;
}

std::string next_item_to_json(const NextItem& item) {
    ojson j;
    j["session_id"] = item.session_id;
    j["phase"] = to_string(item.phase);
    j["image_id"] = item.image_id;
    j["image_ref"] = item.image_ref;
    j["progress"] = {{"answered", item.answered},
                     {"total", item.total},
                     {"phase_answered", item.phase_answered},
                     {"phase_total", item.phase_total}};
    j["phase_start"] = item.phase_start;
    ojson ins{{"text", item.instructions.text}};
    if (item.phase == Phase::Session2) {
        ins["words_positive"] = item.instructions.words_positive;
        ins["words_negative"] = item.instructions.words_negative;
    }
    j["instructions"] = std::move(ins);
    j["choices"] = ojson::array({{{"value", 0}, {"name", item.negative_name}}, {{"value", 1}, {"name", item.positive_name}}});
    return j.dump();
}

std::string ack_to_json(const Ack& ack) {
    ojson j{{"accepted", true},
            {"session_id", ack.session_id},
            {"image_id", ack.image_id},
            {"phase", to_string(ack.phase)},
            {"progress", {{"answered", ack.answered}, {"total", ack.total}}}};
    return j.dump();
}

}  // namespace wordlens::study
