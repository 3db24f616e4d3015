#pragma once

#include <Eigen/Dense>
#include <cstddef>
#include <limits>
#include <map>
#include <set>
#include <span>
#include <string>
#include <tuple>
#include <vector>

#include "mtq/task.hpp"

namespace mtq {

using Matrix = Eigen::MatrixXd;
using BoolMatrix = Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic>;

// One rating r_{s,j} for one task. Raw ingested values are integers on the
// 1-5 scale; corrected values are real and may leave [1,5].
struct RatingRecord {
    std::string sample_id;
    std::string rater_id;
    TaskId task;
    double value = 0.0;
};

enum class RatingKind { raw, corrected };

// Rating collection indexed by (task, sample) and (task, rater).
// Read-only after construction; safe to share across threads.
class RatingTable {
public:
    void add(RatingRecord rec);  // throws on duplicate (sample, rater, task)

    const std::vector<RatingRecord>& records() const { return records_; }
    bool empty() const { return records_.empty(); }

    // Record indices for one (sample, task), ordered by rater_id.
    std::span<const std::size_t> sample_records(const TaskId& task,
                                                const std::string& sample_id) const;
    // Record indices for one (rater, task), ordered by sample_id.
    std::span<const std::size_t> rater_records(const TaskId& task,
                                               const std::string& rater_id) const;

    std::size_t num_raters(const TaskId& task, const std::string& sample_id) const;  // N_s
    std::size_t num_samples(const TaskId& task, const std::string& rater_id) const;  // S_j

    std::vector<std::string> samples(const TaskId& task) const;  // sorted
    std::vector<std::string> raters(const TaskId& task) const;   // sorted
    std::vector<TaskId> tasks() const;                           // sorted

    // Rating of one rater for one sample. Throws if absent.
    double rating(const TaskId& task, const std::string& sample_id,
                  const std::string& rater_id) const;

private:
    friend class RatingTableBuilder;
    std::vector<RatingRecord> records_;
    // (task name, sample id) -> record indices sorted by rater id
    std::map<std::pair<std::string, std::string>, std::vector<std::size_t>> by_sample_;
    // (task name, rater id) -> record indices sorted by sample id
    std::map<std::pair<std::string, std::string>, std::vector<std::size_t>> by_rater_;
};

// Partially labeled multi-task dataset. Masked-out label cells hold a NaN
// sentinel; the mask is authoritative and masked cells are never read.
struct Dataset {
    std::vector<std::string> sample_ids;
    Matrix features;   // n x d
    Matrix labels;     // n x T
    BoolMatrix mask;   // n x T, true = label present
    std::vector<TaskId> tasks;

    Eigen::Index rows() const { return features.rows(); }
    Eigen::Index dim() const { return features.cols(); }
    std::size_t num_tasks() const { return tasks.size(); }

    // Throws std::invalid_argument describing the first violated invariant.
    void validate() const;
};

inline double masked_sentinel() { return std::numeric_limits<double>::quiet_NaN(); }

// Ratings CSV with header `sample_id,rater_id,task,value`. Raw mode enforces
// integer values in 1..5; corrected mode accepts any finite decimal.
RatingTable load_ratings(const std::string& path, RatingKind kind = RatingKind::raw);
void save_ratings(const RatingTable& table, const std::string& path);

// M_s per sample: arithmetic mean of the sample's ratings for the task.
// Summation over value-sorted ratings, so the result is independent of
// record order. Throws if the task has no samples.
std::map<std::string, double> aggregate_mos(const RatingTable& table, const TaskId& task);

// Stacks parts row-wise over the ordered union of their task lists. Tasks
// absent from a part are masked out in its rows. Throws on feature-dimension
// mismatch or duplicate sample_id across parts.
Dataset merge_datasets(const std::vector<Dataset>& parts);

// Dataset directory: features.csv, labels.csv (empty cell = missing),
// tasks.txt, samples.txt. Decimals round-trip at full double precision.
void save_dataset(const Dataset& ds, const std::string& dir);
Dataset load_dataset(const std::string& dir);

}  // namespace mtq
