#pragma once

#include <compare>
#include <stdexcept>
#include <string>
#include <vector>

namespace mtq {

// Task identifier for a label column. The built-in names cover the label
// regimes handled by the pipeline; any other nonempty name is accepted.
class TaskId {
public:
    TaskId() = default;
    explicit TaskId(std::string name) : name_(std::move(name)) {
        if (name_.empty()) throw std::invalid_argument("TaskId: empty name");
    }

    const std::string& name() const { return name_; }

    bool operator==(const TaskId&) const = default;
    auto operator<=>(const TaskId&) const = default;

private:
    std::string name_;
};

namespace task {
inline const TaskId MOS{"MOS"};
inline const TaskId OVR{"OVR"};
inline const TaskId SIG{"SIG"};
inline const TaskId BAK{"BAK"};
inline const TaskId T60{"T60"};
inline const TaskId C50{"C50"};
}  // namespace task

// Index of `t` in `tasks`, or -1.
inline int task_index(const std::vector<TaskId>& tasks, const TaskId& t) {
    for (std::size_t i = 0; i < tasks.size(); ++i)
        if (tasks[i] == t) return static_cast<int>(i);
    return -1;
}

}  // namespace mtq
