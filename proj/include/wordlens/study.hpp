#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <string>
#include <vector>

#include "wordlens/embed_io.hpp"
#include "wordlens/error.hpp"
#include "wordlens/stats.hpp"

namespace wordlens::study {

enum class Phase { Session1, Session2, Done };
enum class EducationGroup { Unspecified, Degree, NoDegree };

std::string to_string(Phase p);
std::string to_string(EducationGroup g);
EducationGroup parse_education_group(const std::string& s);

/// Maps to an HTTP status in the service layer.
class StudyError : public ValidationError {
public:
    enum class Kind { Invalid, NotFound, Conflict };
    StudyError(Kind kind, const std::string& what) : ValidationError(what), kind_(kind) {}
    Kind kind() const noexcept { return kind_; }

private:
    Kind kind_;
};

inline constexpr const char* kDefaultSession1Instructions =
    "Classify each image as {negative} or {positive}. Responses are final.";
inline constexpr const char* kDefaultSession2Instructions =
    "You will now be given words generated using an AI model to help describe general differences in the "
    "appearance of {negative} vs. {positive} images.";

struct StudyConfig {
    std::string task_name;
    std::string positive_name = "Malignant";
    std::string negative_name = "Benign";
    std::vector<std::string> test_ids;  // order matters for sampling
    LabelSet labels;
    std::map<std::string, double> ai_scores;
    std::size_t n_images = 50;
    std::size_t n_per_class = 25;
    double accuracy_tolerance = 0.02;
    double ai_threshold = 0.5;
    std::size_t max_attempts = 10000;
    std::vector<std::string> words_positive;
    std::vector<std::string> words_negative;
    std::uint64_t rng_seed = 0;
    std::filesystem::path image_base_path;
    std::string session1_instructions = kDefaultSession1Instructions;
    std::string session2_instructions = kDefaultSession2Instructions;

    void validate() const;
};

StudyConfig parse_study_config(std::string_view json);
StudyConfig read_study_config(const std::filesystem::path& path);
std::string study_config_to_json(const StudyConfig& cfg);

/// Stable identifier derived from the canonical config JSON.
std::string study_id_for(const StudyConfig& cfg);

struct SampleResult {
    std::vector<std::string> ids;  // sampled negatives, then sampled positives
    std::size_t attempts = 0;
    double sample_accuracy = 0.0;
    double full_accuracy = 0.0;
    bool tolerance_met = false;
};

/// Seeded rejection sampling of n_per_class items per class until the AI's accuracy on the
/// sample is within accuracy_tolerance of its accuracy on the whole test set. After
/// max_attempts the closest sample is returned with tolerance_met == false.
SampleResult stratified_sample(const StudyConfig& cfg);

struct Response {
    std::string image_id;
    int choice = 0;
    std::int64_t ts = 0;
};

struct StudySession {
    std::string session_id;
    std::string study_id;
    std::string participant_id;
    EducationGroup education_group = EducationGroup::Unspecified;
    std::vector<std::string> order_s1;
    std::vector<std::string> order_s2;
    std::vector<Response> responses_s1;  // presentation order
    std::vector<Response> responses_s2;

    Phase phase() const;
    std::size_t answered() const { return responses_s1.size() + responses_s2.size(); }
    std::size_t total() const { return order_s1.size() + order_s2.size(); }
};

struct Instructions {
    std::string text;
    std::vector<std::string> words_positive;  // empty in session 1
    std::vector<std::string> words_negative;
};

struct NextItem {
    std::string session_id;
    Phase phase;
    std::string image_id;
    std::string image_ref;
    std::size_t answered = 0;
    std::size_t total = 0;
    std::size_t phase_answered = 0;
    std::size_t phase_total = 0;
    bool phase_start = false;  // first item of a phase; the UI shows the instruction screen
    Instructions instructions;
    std::string positive_name;
    std::string negative_name;
};

struct Ack {
    std::string session_id;
    std::string image_id;
    Phase phase;  // phase after the submission
    std::size_t answered = 0;
    std::size_t total = 0;
};

struct ParticipantSummary {
    std::string session_id;
    std::string participant_id;
    EducationGroup education_group = EducationGroup::Unspecified;
    bool complete = false;
    std::size_t answered = 0;
    // Set only for complete sessions.
    double acc_s1 = 0, acc_s2 = 0;
    double acc_s1_first_half = 0, acc_s1_second_half = 0;
    double acc_s2_first_half = 0, acc_s2_second_half = 0;
    std::size_t correct_s1 = 0, correct_s2 = 0;
};

struct SessionAggregate {
    double mean_accuracy = 0;
    double first_half_mean = 0;
    double second_half_mean = 0;
    ProportionResult pooled;
};

struct GroupAggregate {
    std::size_t n = 0;
    double acc_s1 = 0;
    double acc_s2 = 0;
};

struct StudySummary {
    std::string study_id;
    std::string task_name;
    std::size_t n_complete = 0;
    std::size_t n_incomplete = 0;
    std::vector<ParticipantSummary> participants;
    SessionAggregate session1;
    SessionAggregate session2;
    std::optional<PairedTestResult> improvement;
    std::string improvement_note;  // why the test is not computable, when it is not
    std::map<std::string, GroupAggregate> education_groups;
};

/// Pure summary over stored sessions; all statistics route through the stats module.
/// Throws StudyError(Conflict) when no session is complete.
StudySummary summarize(const std::string& study_id, const StudyConfig& cfg, const std::vector<StudySession>& sessions);
std::string summary_to_json(const StudySummary& s);

/// Studies and sessions recovered from a data directory:
///   studies/<id>.json   config and sample of each loaded study
///   sessions.json       session metadata snapshot (rewritten on creation)
///   events.jsonl        append-only responses {ts, session_id, phase, image_id, choice}
struct StudyRecord {
    StudyConfig config;
    SampleResult sample;
};

struct StudyState {
    std::map<std::string, StudyRecord> studies;
    std::vector<StudySession> sessions;  // creation order
};

StudyState load_state(const std::filesystem::path& data_dir);

class StudyService {
public:
    using Clock = std::function<std::int64_t()>;

    /// Recovers any state already present in `data_dir`.
    explicit StudyService(std::filesystem::path data_dir, Clock clock = {});
    ~StudyService();
    StudyService(const StudyService&) = delete;
    StudyService& operator=(const StudyService&) = delete;

    /// Validates, samples and persists the study. Loading an identical config again returns the same id.
    std::string load_study(const StudyConfig& cfg);
    StudyRecord study(const std::string& study_id) const;
    std::vector<std::string> study_ids() const;

    StudySession create_session(const std::string& study_id, const std::string& participant_id,
                                EducationGroup group = EducationGroup::Unspecified);
    StudySession session(const std::string& session_id) const;

    NextItem next_item(const std::string& session_id) const;
    /// Durable (fsync'd) before it returns.
    Ack submit_response(const std::string& session_id, const std::string& image_id, int choice);

    StudySummary summary(const std::string& study_id) const;

    /// File for a sampled image, if one exists under the owning study's image_base_path.
    std::optional<std::filesystem::path> image_path(const std::string& image_id) const;

    const std::filesystem::path& data_dir() const noexcept { return data_dir_; }

private:
    void persist_sessions_locked() const;
    StudySession& session_locked(const std::string& session_id);
    const StudySession& session_locked(const std::string& session_id) const;

    std::filesystem::path data_dir_;
    Clock clock_;
    mutable std::shared_mutex mutex_;
    StudyState state_;
    std::map<std::string, std::size_t> session_index_;
    int log_fd_ = -1;
};

std::string next_item_to_json(const NextItem& item);
std::string ack_to_json(const Ack& ack);

}  // namespace wordlens::study
