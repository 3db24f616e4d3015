#include "mtq/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <sstream>
#include <stdexcept>

#include "mtq/numeric.hpp"

namespace fs = std::filesystem;

namespace mtq {

namespace {

[[noreturn]] void fail(const std::string& msg) { throw std::runtime_error(msg); }

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> fields;
    std::string cur;
    for (char c : line) {
        if (c == ',') {
            fields.push_back(cur);
            cur.clear();
        } else if (c != '\r') {
            cur.push_back(c);
        }
    }
    fields.push_back(cur);
    return fields;
}

void check_id(const std::string& id, const char* what) {
    if (id.empty()) fail(std::string(what) + ": empty identifier");
    if (id.find_first_of(",\n\r") != std::string::npos)
        fail(std::string(what) + " '" + id + "' contains a comma or newline");
}

std::ofstream open_out(const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) fail("cannot open for writing: " + path);
    return out;
}

std::ifstream open_in(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) fail("cannot open: " + path);
    return in;
}

}  // namespace

void RatingTable::add(RatingRecord rec) {
    check_id(rec.sample_id, "sample_id");
    check_id(rec.rater_id, "rater_id");
    const std::size_t idx = records_.size();

    auto& srecs = by_sample_[{rec.task.name(), rec.sample_id}];
    auto spos = std::lower_bound(srecs.begin(), srecs.end(), rec.rater_id,
                                 [&](std::size_t i, const std::string& r) {
                                     return records_[i].rater_id < r;
                                 });
    if (spos != srecs.end() && records_[*spos].rater_id == rec.rater_id)
        fail("duplicate rating for (sample=" + rec.sample_id + ", rater=" + rec.rater_id +
             ", task=" + rec.task.name() + ")");

    auto& rrecs = by_rater_[{rec.task.name(), rec.rater_id}];
    auto rpos = std::lower_bound(rrecs.begin(), rrecs.end(), rec.sample_id,
                                 [&](std::size_t i, const std::string& s) {
                                     return records_[i].sample_id < s;
                                 });

    srecs.insert(spos, idx);
    rrecs.insert(rpos, idx);
    records_.push_back(std::move(rec));
}

std::span<const std::size_t> RatingTable::sample_records(const TaskId& task,
                                                         const std::string& sample_id) const {
    auto it = by_sample_.find({task.name(), sample_id});
    if (it == by_sample_.end()) return {};
    return it->second;
}

std::span<const std::size_t> RatingTable::rater_records(const TaskId& task,
                                                        const std::string& rater_id) const {
    auto it = by_rater_.find({task.name(), rater_id});
    if (it == by_rater_.end()) return {};
    return it->second;
}

std::size_t RatingTable::num_raters(const TaskId& task, const std::string& sample_id) const {
    return sample_records(task, sample_id).size();
}

std::size_t RatingTable::num_samples(const TaskId& task, const std::string& rater_id) const {
    return rater_records(task, rater_id).size();
}

std::vector<std::string> RatingTable::samples(const TaskId& task) const {
    std::vector<std::string> out;
    for (const auto& [key, recs] : by_sample_)
        if (key.first == task.name() && !recs.empty()) out.push_back(key.second);
    return out;  // map iteration order is already sorted
}

std::vector<std::string> RatingTable::raters(const TaskId& task) const {
    std::vector<std::string> out;
    for (const auto& [key, recs] : by_rater_)
        if (key.first == task.name() && !recs.empty()) out.push_back(key.second);
    return out;
}

std::vector<TaskId> RatingTable::tasks() const {
    std::set<std::string> names;
    for (const auto& r : records_) names.insert(r.task.name());
    std::vector<TaskId> out;
    for (const auto& n : names) out.emplace_back(n);
    return out;
}

double RatingTable::rating(const TaskId& task, const std::string& sample_id,
                           const std::string& rater_id) const {
    for (std::size_t i : sample_records(task, sample_id))
        if (records_[i].rater_id == rater_id) return records_[i].value;
    fail("no rating for (sample=" + sample_id + ", rater=" + rater_id +
         ", task=" + task.name() + ")");
}

void Dataset::validate() const {
    const Eigen::Index n = features.rows();
    if (labels.rows() != n || mask.rows() != n)
        throw std::invalid_argument("Dataset: row count mismatch between features/labels/mask");
    if (static_cast<Eigen::Index>(sample_ids.size()) != n)
        throw std::invalid_argument("Dataset: sample_ids size does not match row count");
    if (labels.cols() != static_cast<Eigen::Index>(tasks.size()) ||
        mask.cols() != labels.cols())
        throw std::invalid_argument("Dataset: task count mismatch between tasks/labels/mask");

    std::set<std::string> names;
    for (const auto& t : tasks)
        if (!names.insert(t.name()).second)
            throw std::invalid_argument("Dataset: duplicate task " + t.name());
    std::set<std::string> ids(sample_ids.begin(), sample_ids.end());
    if (static_cast<Eigen::Index>(ids.size()) != n)
        throw std::invalid_argument("Dataset: duplicate sample_id");

    bool any = false;
    for (Eigen::Index i = 0; i < n; ++i) {
        for (Eigen::Index t = 0; t < labels.cols(); ++t) {
            if (mask(i, t)) {
                any = true;
                if (!std::isfinite(labels(i, t)))
                    throw std::invalid_argument("Dataset: non-finite label at unmasked cell");
            }
        }
        for (Eigen::Index d = 0; d < features.cols(); ++d)
            if (!std::isfinite(features(i, d)))
                throw std::invalid_argument("Dataset: non-finite feature value");
    }
    if (!any) throw std::invalid_argument("Dataset: no labeled cells");
}

RatingTable load_ratings(const std::string& path, RatingKind kind) {
    std::ifstream in = open_in(path);
    std::string line;
    if (!std::getline(in, line)) fail(path + ": no records");
    {
        auto header = split_csv_line(line);
        if (header != std::vector<std::string>{"sample_id", "rater_id", "task", "value"})
            fail(path + ":1: expected header sample_id,rater_id,task,value");
    }

    RatingTable table;
    std::size_t lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty() || line == "\r") continue;
        const std::string where = path + ":" + std::to_string(lineno) + ": ";
        auto fields = split_csv_line(line);
        if (fields.size() != 4) fail(where + "expected 4 fields, got " +
                                     std::to_string(fields.size()));
        double value = 0.0;
        if (!parse_double(fields[3], value) || !std::isfinite(value))
            fail(where + "bad rating value '" + fields[3] + "'");
        if (kind == RatingKind::raw) {
            if (value != std::floor(value) || value < 1.0 || value > 5.0)
                fail(where + "raw rating out of range 1..5: " + fields[3]);
        }
        try {
            table.add({fields[0], fields[1], TaskId(fields[2]), value});
        } catch (const std::exception& e) {
            fail(where + e.what());
        }
    }
    if (table.empty()) fail(path + ": no records");
    return table;
}

void save_ratings(const RatingTable& table, const std::string& path) {
    std::ofstream out = open_out(path);
    out << "sample_id,rater_id,task,value\n";
    for (const auto& r : table.records())
        out << r.sample_id << ',' << r.rater_id << ',' << r.task.name() << ','
            << format_double(r.value) << '\n';
    if (!out) fail("write failed: " + path);
}

std::map<std::string, double> aggregate_mos(const RatingTable& table, const TaskId& task) {
    std::map<std::string, double> out;
    for (const auto& sample : table.samples(task)) {
        const auto recs = table.sample_records(task, sample);
        std::vector<double> values;
        values.reserve(recs.size());
        for (std::size_t i : recs) values.push_back(table.records()[i].value);
        std::sort(values.begin(), values.end());
        out[sample] = compensated_total(values) / static_cast<double>(values.size());
    }
    if (out.empty()) fail("aggregate_mos: no ratings for task " + task.name());
    return out;
}

Dataset merge_datasets(const std::vector<Dataset>& parts) {
    if (parts.empty()) fail("merge_datasets: no parts");
    for (const auto& p : parts) p.validate();

    const Eigen::Index d = parts.front().dim();
    Eigen::Index n = 0;
    std::vector<TaskId> tasks;
    std::set<std::string> seen_ids;
    for (const auto& p : parts) {
        if (p.dim() != d)
            fail("merge_datasets: feature dimension mismatch (" + std::to_string(p.dim()) +
                 " vs " + std::to_string(d) + ")");
        n += p.rows();
        for (const auto& t : p.tasks)
            if (task_index(tasks, t) < 0) tasks.push_back(t);
        for (const auto& id : p.sample_ids)
            if (!seen_ids.insert(id).second)
                fail("merge_datasets: duplicate sample_id across parts: " + id);
    }

    Dataset out;
    out.tasks = tasks;
    out.features.resize(n, d);
    out.labels.setConstant(n, static_cast<Eigen::Index>(tasks.size()), masked_sentinel());
    out.mask = BoolMatrix::Constant(n, static_cast<Eigen::Index>(tasks.size()), false);
    out.sample_ids.reserve(static_cast<std::size_t>(n));

    Eigen::Index row = 0;
    for (const auto& p : parts) {
        std::vector<int> col_of(p.tasks.size());
        for (std::size_t t = 0; t < p.tasks.size(); ++t)
            col_of[t] = task_index(tasks, p.tasks[t]);
        for (Eigen::Index i = 0; i < p.rows(); ++i, ++row) {
            out.features.row(row) = p.features.row(i);
            out.sample_ids.push_back(p.sample_ids[static_cast<std::size_t>(i)]);
            for (std::size_t t = 0; t < p.tasks.size(); ++t) {
                if (p.mask(i, static_cast<Eigen::Index>(t))) {
                    out.labels(row, col_of[t]) = p.labels(i, static_cast<Eigen::Index>(t));
                    out.mask(row, col_of[t]) = true;
                }
            }
        }
    }
    return out;
}

void save_dataset(const Dataset& ds, const std::string& dir) {
    ds.validate();
    fs::create_directories(dir);

    {
        std::ofstream out = open_out(dir + "/features.csv");
        for (Eigen::Index i = 0; i < ds.rows(); ++i) {
            for (Eigen::Index j = 0; j < ds.dim(); ++j) {
                if (j) out << ',';
                out << format_double(ds.features(i, j));
            }
            out << '\n';
        }
    }
    {
        std::ofstream out = open_out(dir + "/labels.csv");
        for (Eigen::Index i = 0; i < ds.rows(); ++i) {
            for (Eigen::Index t = 0; t < static_cast<Eigen::Index>(ds.num_tasks()); ++t) {
                if (t) out << ',';
                if (ds.mask(i, t)) out << format_double(ds.labels(i, t));
            }
            out << '\n';
        }
    }
    {
        std::ofstream out = open_out(dir + "/tasks.txt");
        for (const auto& t : ds.tasks) out << t.name() << '\n';
    }
    {
        std::ofstream out = open_out(dir + "/samples.txt");
        for (const auto& id : ds.sample_ids) {
            check_id(id, "sample_id");
            out << id << '\n';
        }
    }
}

Dataset load_dataset(const std::string& dir) {
    Dataset ds;
    {
        std::ifstream in = open_in(dir + "/tasks.txt");
        std::string line;
        while (std::getline(in, line)) {
            if (!line.empty() && line.back() == '\r') line.pop_back();
            if (!line.empty()) ds.tasks.emplace_back(line);
        }
    }
    {
        std::ifstream in = open_in(dir + "/samples.txt");
        std::string line;
        while (std::getline(in, line)) {
            if (!line.empty() && line.back() == '\r') line.pop_back();
            if (!line.empty()) ds.sample_ids.push_back(line);
        }
    }
    const auto n = static_cast<Eigen::Index>(ds.sample_ids.size());
    const auto T = static_cast<Eigen::Index>(ds.tasks.size());

    std::vector<std::vector<double>> feat_rows;
    {
        std::ifstream in = open_in(dir + "/features.csv");
        std::string line;
        std::size_t lineno = 0;
        while (std::getline(in, line)) {
            ++lineno;
            if (line.empty() || line == "\r") continue;
            auto fields = split_csv_line(line);
            std::vector<double> row(fields.size());
            for (std::size_t j = 0; j < fields.size(); ++j)
                if (!parse_double(fields[j], row[j]))
                    fail(dir + "/features.csv:" + std::to_string(lineno) + ": bad value '" +
                         fields[j] + "'");
            feat_rows.push_back(std::move(row));
        }
    }
    if (static_cast<Eigen::Index>(feat_rows.size()) != n)
        fail(dir + ": features.csv row count does not match samples.txt");
    const auto d = static_cast<Eigen::Index>(feat_rows.empty() ? 0 : feat_rows[0].size());
    ds.features.resize(n, d);
    for (Eigen::Index i = 0; i < n; ++i) {
        if (static_cast<Eigen::Index>(feat_rows[static_cast<std::size_t>(i)].size()) != d)
            fail(dir + "/features.csv: ragged row " + std::to_string(i + 1));
        for (Eigen::Index j = 0; j < d; ++j)
            ds.features(i, j) = feat_rows[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
    }

    ds.labels.setConstant(n, T, masked_sentinel());
    ds.mask = BoolMatrix::Constant(n, T, false);
    {
        std::ifstream in = open_in(dir + "/labels.csv");
        std::string line;
        Eigen::Index i = 0;
        std::size_t lineno = 0;
        while (std::getline(in, line)) {
            ++lineno;
            if (line.empty() && i >= n) continue;
            if (i >= n) fail(dir + "/labels.csv: more rows than samples");
            auto fields = split_csv_line(line);
            if (static_cast<Eigen::Index>(fields.size()) != T)
                fail(dir + "/labels.csv:" + std::to_string(lineno) + ": expected " +
                     std::to_string(T) + " cells");
            for (Eigen::Index t = 0; t < T; ++t) {
                if (fields[static_cast<std::size_t>(t)].empty()) continue;
                double v = 0.0;
                if (!parse_double(fields[static_cast<std::size_t>(t)], v))
                    fail(dir + "/labels.csv:" + std::to_string(lineno) + ": bad value '" +
                         fields[static_cast<std::size_t>(t)] + "'");
                ds.labels(i, t) = v;
                ds.mask(i, t) = true;
            }
            ++i;
        }
        if (i != n) fail(dir + "/labels.csv: fewer rows than samples");
    }
    ds.validate();
    return ds;
}

}  // namespace mtq
