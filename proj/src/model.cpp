#include "mtq/model.hpp"

#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "mtq/numeric.hpp"
#include "mtq/rng.hpp"

namespace mtq {

namespace {

Eigen::MatrixXd relu(const Eigen::MatrixXd& z) { return z.cwiseMax(0.0); }

// Layer output for batch input A (n x in): A * W^T + b per row.
Eigen::MatrixXd affine(const Layer& l, const Eigen::MatrixXd& a) {
    return (a * l.W.transpose()).rowwise() + l.b.transpose();
}

}  // namespace

void Architecture::validate() const {
    if (input_dim <= 0) throw std::invalid_argument("Architecture: input_dim must be positive");
    if (tasks.empty()) throw std::invalid_argument("Architecture: no tasks");
    for (int w : trunk_layers)
        if (w <= 0) throw std::invalid_argument("Architecture: zero-width trunk layer");
    for (int w : branch_layers)
        if (w <= 0) throw std::invalid_argument("Architecture: zero-width branch layer");
    if (split_index < 0 || split_index > static_cast<int>(trunk_layers.size()))
        throw std::invalid_argument("Architecture: split_index out of range");
    std::set<std::string> names;
    for (const auto& t : tasks)
        if (!names.insert(t.name()).second)
            throw std::invalid_argument("Architecture: duplicate task " + t.name());
}

std::vector<int> Architecture::branch_widths() const {
    std::vector<int> widths(trunk_layers.begin() + split_index, trunk_layers.end());
    widths.insert(widths.end(), branch_layers.begin(), branch_layers.end());
    widths.push_back(1);  // scalar head
    return widths;
}

int Architecture::shared_output_dim() const {
    return split_index == 0 ? input_dim : trunk_layers[static_cast<std::size_t>(split_index) - 1];
}

std::size_t Architecture::param_count() const {
    std::size_t count = 0;
    int in = input_dim;
    for (int i = 0; i < split_index; ++i) {
        const int out = trunk_layers[static_cast<std::size_t>(i)];
        count += static_cast<std::size_t>(out) * static_cast<std::size_t>(in) +
                 static_cast<std::size_t>(out);
        in = out;
    }
    const int shared = in;
    for (std::size_t t = 0; t < tasks.size(); ++t) {
        in = shared;
        for (int out : branch_widths()) {
            count += static_cast<std::size_t>(out) * static_cast<std::size_t>(in) +
                     static_cast<std::size_t>(out);
            in = out;
        }
    }
    return count;
}

std::string Architecture::descriptor() const {
    std::ostringstream os;
    os << "input_dim=" << input_dim << " trunk=";
    for (std::size_t i = 0; i < trunk_layers.size(); ++i)
        os << (i ? "," : "") << trunk_layers[i];
    os << " split_index=" << split_index << " branch=";
    for (std::size_t i = 0; i < branch_layers.size(); ++i)
        os << (i ? "," : "") << branch_layers[i];
    os << " tasks=";
    for (std::size_t i = 0; i < tasks.size(); ++i) os << (i ? "," : "") << tasks[i].name();
    return os.str();
}

Architecture Architecture::from_descriptor(const std::string& line) {
    Architecture arch;
    std::istringstream is(line);
    std::string field;
    auto parse_ints = [](const std::string& csv) {
        std::vector<int> out;
        std::string item;
        std::istringstream ss(csv);
        while (std::getline(ss, item, ','))
            if (!item.empty()) out.push_back(std::stoi(item));
        return out;
    };
    while (is >> field) {
        const auto eq = field.find('=');
        if (eq == std::string::npos)
            throw std::runtime_error("bad architecture descriptor field: " + field);
        const std::string key = field.substr(0, eq);
        const std::string value = field.substr(eq + 1);
        if (key == "input_dim") arch.input_dim = std::stoi(value);
        else if (key == "trunk") arch.trunk_layers = parse_ints(value);
        else if (key == "split_index") arch.split_index = std::stoi(value);
        else if (key == "branch") arch.branch_layers = parse_ints(value);
        else if (key == "tasks") {
            std::string item;
            std::istringstream ss(value);
            while (std::getline(ss, item, ','))
                if (!item.empty()) arch.tasks.emplace_back(item);
        } else {
            throw std::runtime_error("unknown architecture descriptor key: " + key);
        }
    }
    arch.validate();
    return arch;
}

ModelParams ModelParams::zeros_like() const {
    ModelParams out = *this;
    out.visit([](Layer& l) {
        l.W.setZero();
        l.b.setZero();
    });
    return out;
}

bool ModelParams::same_shape(const ModelParams& other) const {
    if (trunk.size() != other.trunk.size() || branches.size() != other.branches.size())
        return false;
    for (std::size_t i = 0; i < trunk.size(); ++i)
        if (trunk[i].W.rows() != other.trunk[i].W.rows() ||
            trunk[i].W.cols() != other.trunk[i].W.cols())
            return false;
    for (std::size_t t = 0; t < branches.size(); ++t) {
        if (branches[t].size() != other.branches[t].size()) return false;
        for (std::size_t i = 0; i < branches[t].size(); ++i)
            if (branches[t][i].W.rows() != other.branches[t][i].W.rows() ||
                branches[t][i].W.cols() != other.branches[t][i].W.cols())
                return false;
    }
    return true;
}

ModelParams init_params(const Architecture& arch, std::uint64_t seed) {
    arch.validate();
    Rng rng(mix_seed(seed, fnv1a64("init_params")));
    auto make_layer = [&](int out, int in) {
        Layer l;
        l.W.resize(out, in);
        const double s = std::sqrt(6.0 / static_cast<double>(in));
        for (Eigen::Index r = 0; r < l.W.rows(); ++r)
            for (Eigen::Index c = 0; c < l.W.cols(); ++c) l.W(r, c) = rng.uniform(-s, s);
        l.b = Eigen::VectorXd::Zero(out);
        return l;
    };

    ModelParams params;
    int in = arch.input_dim;
    for (int i = 0; i < arch.split_index; ++i) {
        const int out = arch.trunk_layers[static_cast<std::size_t>(i)];
        params.trunk.push_back(make_layer(out, in));
        in = out;
    }
    const int shared = in;
    const auto widths = arch.branch_widths();
    params.branches.resize(arch.tasks.size());
    for (std::size_t t = 0; t < arch.tasks.size(); ++t) {
        in = shared;
        for (int out : widths) {
            params.branches[t].push_back(make_layer(out, in));
            in = out;
        }
    }
    return params;
}

std::pair<Eigen::MatrixXd, ForwardCache> forward(const ModelParams& params,
                                                 const Eigen::MatrixXd& x) {
    if (!params.trunk.empty() && x.cols() != params.trunk.front().W.cols())
        throw std::invalid_argument("forward: input dimension mismatch");
    if (params.trunk.empty() && !params.branches.empty() &&
        x.cols() != params.branches.front().front().W.cols())
        throw std::invalid_argument("forward: input dimension mismatch");

    ForwardCache cache;
    cache.input = x;
    Eigen::MatrixXd a = x;
    for (const auto& layer : params.trunk) {
        Eigen::MatrixXd z = affine(layer, a);
        cache.trunk_pre.push_back(z);
        a = relu(z);
        cache.trunk_act.push_back(a);
    }

    const std::size_t T = params.branches.size();
    Eigen::MatrixXd outputs(x.rows(), static_cast<Eigen::Index>(T));
    cache.branch_pre.resize(T);
    cache.branch_act.resize(T);
    for (std::size_t t = 0; t < T; ++t) {
        Eigen::MatrixXd ba = a;
        const auto& stack = params.branches[t];
        for (std::size_t j = 0; j < stack.size(); ++j) {
            Eigen::MatrixXd z = affine(stack[j], ba);
            cache.branch_pre[t].push_back(z);
            if (j + 1 < stack.size()) {
                ba = relu(z);
                cache.branch_act[t].push_back(ba);
            } else {
                outputs.col(static_cast<Eigen::Index>(t)) = z.col(0);  // identity head
            }
        }
    }
    return {outputs, std::move(cache)};
}

Eigen::MatrixXd forward_outputs(const ModelParams& params, const Eigen::MatrixXd& x) {
    return forward(params, x).first;
}

ParamGrads backward(const ModelParams& params, const ForwardCache& cache,
                    const Eigen::MatrixXd& output_grads) {
    if (output_grads.cols() != static_cast<Eigen::Index>(params.branches.size()))
        throw std::invalid_argument("backward: output_grads column count mismatch");
    if (output_grads.rows() != cache.input.rows())
        throw std::invalid_argument("backward: output_grads row count mismatch");
    if (cache.trunk_pre.size() != params.trunk.size() ||
        cache.branch_pre.size() != params.branches.size())
        throw std::invalid_argument("backward: cache does not match params");

    ParamGrads grads = params.zeros_like();
    const Eigen::MatrixXd& shared_act =
        params.trunk.empty() ? cache.input : cache.trunk_act.back();
    Eigen::MatrixXd shared_grad = Eigen::MatrixXd::Zero(shared_act.rows(), shared_act.cols());

    for (std::size_t t = 0; t < params.branches.size(); ++t) {
        const auto& stack = params.branches[t];
        // Head is linear, so its pre-activation gradient is the output grad.
        Eigen::MatrixXd dz = output_grads.col(static_cast<Eigen::Index>(t));
        for (std::size_t j = stack.size(); j-- > 0;) {
            const Eigen::MatrixXd& in_act =
                j == 0 ? shared_act : cache.branch_act[t][j - 1];
            grads.branches[t][j].W = dz.transpose() * in_act;
            grads.branches[t][j].b = dz.colwise().sum().transpose();
            Eigen::MatrixXd da = dz * stack[j].W;
            if (j == 0) {
                shared_grad += da;
            } else {
                dz = da.cwiseProduct(
                    (cache.branch_pre[t][j - 1].array() > 0.0).cast<double>().matrix());
            }
        }
    }

    Eigen::MatrixXd da = shared_grad;
    for (std::size_t i = params.trunk.size(); i-- > 0;) {
        Eigen::MatrixXd dz =
            da.cwiseProduct((cache.trunk_pre[i].array() > 0.0).cast<double>().matrix());
        const Eigen::MatrixXd& in_act = i == 0 ? cache.input : cache.trunk_act[i - 1];
        grads.trunk[i].W = dz.transpose() * in_act;
        grads.trunk[i].b = dz.colwise().sum().transpose();
        da = dz * params.trunk[i].W;
    }
    return grads;
}

namespace {

// Smallest |pre-activation| across all rectified units.
double min_kink_margin(const ForwardCache& cache) {
    double margin = std::numeric_limits<double>::infinity();
    for (const auto& z : cache.trunk_pre)
        margin = std::min(margin, z.array().abs().minCoeff());
    for (const auto& stack : cache.branch_pre)
        for (std::size_t j = 0; j + 1 < stack.size(); ++j)  // head is linear
            margin = std::min(margin, stack[j].array().abs().minCoeff());
    return margin;
}

}  // namespace

GradCheckReport gradient_check(const Architecture& arch, std::uint64_t seed,
                               double tolerance, double step) {
    arch.validate();
    ModelParams params = init_params(arch, seed);

    const Eigen::Index batch = 8;
    Eigen::MatrixXd x(batch, arch.input_dim);
    Eigen::MatrixXd g(batch, static_cast<Eigen::Index>(arch.tasks.size()));
    for (int attempt = 0; attempt < 64; ++attempt) {
        Rng rng(mix_seed(seed, fnv1a64("gradient_check"), static_cast<std::uint64_t>(attempt)));
        for (Eigen::Index i = 0; i < x.rows(); ++i)
            for (Eigen::Index j = 0; j < x.cols(); ++j) x(i, j) = rng.normal();
        for (Eigen::Index i = 0; i < g.rows(); ++i)
            for (Eigen::Index j = 0; j < g.cols(); ++j) g(i, j) = rng.normal();
        if (min_kink_margin(forward(params, x).second) > 1e-3) break;
    }

    auto objective = [&](const ModelParams& p) {
        return (forward_outputs(p, x).array() * g.array()).sum();
    };

    ParamGrads analytic = backward(params, forward(params, x).second, g);

    GradCheckReport report;
    ModelParams probe = params;
    auto check_matrix = [&](Eigen::MatrixXd& pm, const Eigen::MatrixXd& am) {
        for (Eigen::Index r = 0; r < pm.rows(); ++r) {
            for (Eigen::Index c = 0; c < pm.cols(); ++c) {
                const double saved = pm(r, c);
                pm(r, c) = saved + step;
                const double fp = objective(probe);
                pm(r, c) = saved - step;
                const double fm = objective(probe);
                pm(r, c) = saved;
                const double numeric = (fp - fm) / (2.0 * step);
                const double a = am(r, c);
                const double scale = std::max(std::abs(a), std::abs(numeric));
                const double err = scale > 1e-6 ? std::abs(a - numeric) / scale
                                                : std::abs(a - numeric);
                report.max_rel_error = std::max(report.max_rel_error, err);
                ++report.params_checked;
            }
        }
    };
    auto check_vector = [&](Eigen::VectorXd& pv, const Eigen::VectorXd& av) {
        for (Eigen::Index r = 0; r < pv.size(); ++r) {
            const double saved = pv(r);
            pv(r) = saved + step;
            const double fp = objective(probe);
            pv(r) = saved - step;
            const double fm = objective(probe);
            pv(r) = saved;
            const double numeric = (fp - fm) / (2.0 * step);
            const double a = av(r);
            const double scale = std::max(std::abs(a), std::abs(numeric));
            const double err =
                scale > 1e-6 ? std::abs(a - numeric) / scale : std::abs(a - numeric);
            report.max_rel_error = std::max(report.max_rel_error, err);
            ++report.params_checked;
        }
    };

    for (std::size_t i = 0; i < probe.trunk.size(); ++i) {
        check_matrix(probe.trunk[i].W, analytic.trunk[i].W);
        check_vector(probe.trunk[i].b, analytic.trunk[i].b);
    }
    for (std::size_t t = 0; t < probe.branches.size(); ++t) {
        for (std::size_t i = 0; i < probe.branches[t].size(); ++i) {
            check_matrix(probe.branches[t][i].W, analytic.branches[t][i].W);
            check_vector(probe.branches[t][i].b, analytic.branches[t][i].b);
        }
    }

    report.pass = report.max_rel_error < tolerance;
    return report;
}

void save_checkpoint(const Checkpoint& ckpt, const std::string& path) {
    ckpt.model.arch.validate();
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open for writing: " + path);
    out << "mtq-checkpoint v1\n";
    out << "arch " << ckpt.model.arch.descriptor() << '\n';
    out << "seed " << ckpt.seed << '\n';
    out << "epoch " << ckpt.epoch << '\n';

    auto write_layer = [&](const std::string& tag, const Layer& l) {
        out << tag << ' ' << l.W.rows() << ' ' << l.W.cols() << '\n';
        for (Eigen::Index r = 0; r < l.W.rows(); ++r) {
            for (Eigen::Index c = 0; c < l.W.cols(); ++c)
                out << (c ? " " : "") << format_double(l.W(r, c));
            out << '\n';
        }
        for (Eigen::Index r = 0; r < l.b.size(); ++r)
            out << (r ? " " : "") << format_double(l.b(r));
        out << '\n';
    };
    for (std::size_t i = 0; i < ckpt.model.params.trunk.size(); ++i)
        write_layer("trunk " + std::to_string(i), ckpt.model.params.trunk[i]);
    for (std::size_t t = 0; t < ckpt.model.params.branches.size(); ++t)
        for (std::size_t i = 0; i < ckpt.model.params.branches[t].size(); ++i)
            write_layer("branch " + std::to_string(t) + ' ' + std::to_string(i),
                        ckpt.model.params.branches[t][i]);
    if (!out) throw std::runtime_error("write failed: " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open checkpoint: " + path);
    std::string line;
    if (!std::getline(in, line) || line != "mtq-checkpoint v1")
        throw std::runtime_error(path + ": not a mtq-checkpoint v1 file");

    Checkpoint ckpt;
    if (!std::getline(in, line) || line.rfind("arch ", 0) != 0)
        throw std::runtime_error(path + ": missing arch line");
    ckpt.model.arch = Architecture::from_descriptor(line.substr(5));
    if (!std::getline(in, line) || line.rfind("seed ", 0) != 0)
        throw std::runtime_error(path + ": missing seed line");
    ckpt.seed = std::stoull(line.substr(5));
    if (!std::getline(in, line) || line.rfind("epoch ", 0) != 0)
        throw std::runtime_error(path + ": missing epoch line");
    ckpt.epoch = std::stoi(line.substr(6));

    // Shapes come from the architecture; the per-layer headers are checked
    // against them.
    ckpt.model.params = init_params(ckpt.model.arch, 0);
    auto read_layer = [&](const std::string& tag, Layer& l) {
        if (!std::getline(in, line)) throw std::runtime_error(path + ": truncated at " + tag);
        std::istringstream hdr(line);
        std::string kind;
        std::vector<std::string> words;
        while (hdr >> kind) words.push_back(kind);
        if (words.size() < 2)
            throw std::runtime_error(path + ": bad layer header '" + line + "'");
        const long long rows = std::stoll(words[words.size() - 2]);
        const long long cols = std::stoll(words[words.size() - 1]);
        if (rows != l.W.rows() || cols != l.W.cols())
            throw std::runtime_error(path + ": layer shape mismatch at " + tag);
        for (Eigen::Index r = 0; r < l.W.rows(); ++r) {
            if (!std::getline(in, line)) throw std::runtime_error(path + ": truncated at " + tag);
            std::istringstream row(line);
            std::string word;
            for (Eigen::Index c = 0; c < l.W.cols(); ++c) {
                if (!(row >> word)) throw std::runtime_error(path + ": short row at " + tag);
                double v = 0.0;
                if (!parse_double(word, v))
                    throw std::runtime_error(path + ": bad number '" + word + "' at " + tag);
                l.W(r, c) = v;
            }
        }
        if (!std::getline(in, line)) throw std::runtime_error(path + ": truncated at " + tag);
        std::istringstream brow(line);
        std::string word;
        for (Eigen::Index r = 0; r < l.b.size(); ++r) {
            if (!(brow >> word)) throw std::runtime_error(path + ": short bias row at " + tag);
            double v = 0.0;
            if (!parse_double(word, v))
                throw std::runtime_error(path + ": bad number '" + word + "' at " + tag);
            l.b(r) = v;
        }
    };
    for (std::size_t i = 0; i < ckpt.model.params.trunk.size(); ++i)
        read_layer("trunk " + std::to_string(i), ckpt.model.params.trunk[i]);
    for (std::size_t t = 0; t < ckpt.model.params.branches.size(); ++t)
        for (std::size_t i = 0; i < ckpt.model.params.branches[t].size(); ++i)
            read_layer("branch " + std::to_string(t), ckpt.model.params.branches[t][i]);
    return ckpt;
}

}  // namespace mtq
