#include "pdvmrnn/run_config.hpp"

#include <cctype>
#include <charconv>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

namespace pdvmrnn {

namespace {

std::string trim(const std::string& s) {
    size_t a = 0, b = s.size();
    while (a < b && std::isspace((unsigned char)s[a])) ++a;
    while (b > a && std::isspace((unsigned char)s[b - 1])) --b;
    return s.substr(a, b - a);
}

int parse_int(const std::string& key, const std::string& v) {
    int out = 0;
    auto r = std::from_chars(v.data(), v.data() + v.size(), out);
    if (r.ec != std::errc() || r.ptr != v.data() + v.size()) {
        throw ValidationError("config: '" + key + "' needs an integer, got '" + v + "'");
    }
    return out;
}

uint64_t parse_u64(const std::string& key, const std::string& v) {
    uint64_t out = 0;
    auto r = std::from_chars(v.data(), v.data() + v.size(), out);
    if (r.ec != std::errc() || r.ptr != v.data() + v.size()) {
        throw ValidationError("config: '" + key + "' needs a non-negative integer, got '" + v + "'");
    }
    return out;
}

double parse_double(const std::string& key, const std::string& v) {
    double out = 0;
    auto r = std::from_chars(v.data(), v.data() + v.size(), out);
    if (r.ec != std::errc() || r.ptr != v.data() + v.size()) {
        throw ValidationError("config: '" + key + "' needs a number, got '" + v + "'");
    }
    return out;
}

std::vector<int> parse_int_list(const std::string& key, const std::string& v) {
    std::vector<int> out;
    std::string item;
    std::stringstream ss(v);
    while (std::getline(ss, item, ',')) out.push_back(parse_int(key, trim(item)));
    if (out.empty()) throw ValidationError("config: '" + key + "' needs a comma-separated list");
    return out;
}

std::string fmt_double(double v) {
    char buf[40];
    auto r = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, r.ptr);
}

std::string fmt_int_list(const std::vector<int>& v) {
    std::string out;
    for (size_t i = 0; i < v.size(); ++i) {
        if (i) out += ',';
        out += std::to_string(v[i]);
    }
    return out;
}

const char* scope_name(IsScope s) {
    switch (s) {
        case IsScope::Vision: return "vision";
        case IsScope::Motor: return "motor";
        default: return "all";
    }
}

// Schema as an ordered list of (key, setter, getter); order fixes the
// canonical echo layout.
struct Field {
    const char* key;
    std::function<void(RunConfig&, const std::string&)> set;
    std::function<std::string(const RunConfig&)> get;
};

const std::vector<Field>& fields() {
    static const std::vector<Field> f = {
        {"task",
         [](RunConfig& c, const std::string& v) {
             if (v != "reach" && v != "two_point" && v != "object") {
                 throw ValidationError("config: task must be reach, two_point, or object");
             }
             c.task = v;
         },
         [](const RunConfig& c) { return c.task; }},
        {"data_seed", [](RunConfig& c, const std::string& v) { c.data_seed = parse_u64("data_seed", v); },
         [](const RunConfig& c) { return std::to_string(c.data_seed); }},
        {"model.frame_size",
         [](RunConfig& c, const std::string& v) { c.model.frame_size = parse_int("model.frame_size", v); },
         [](const RunConfig& c) { return std::to_string(c.model.frame_size); }},
        {"model.vision_channels",
         [](RunConfig& c, const std::string& v) { c.model.vision_channels = parse_int_list("model.vision_channels", v); },
         [](const RunConfig& c) { return fmt_int_list(c.model.vision_channels); }},
        {"model.shared_hw",
         [](RunConfig& c, const std::string& v) { c.model.shared_hw = parse_int("model.shared_hw", v); },
         [](const RunConfig& c) { return std::to_string(c.model.shared_hw); }},
        {"model.shared_channels",
         [](RunConfig& c, const std::string& v) { c.model.shared_channels = parse_int("model.shared_channels", v); },
         [](const RunConfig& c) { return std::to_string(c.model.shared_channels); }},
        {"model.motor_widths",
         [](RunConfig& c, const std::string& v) { c.model.motor_widths = parse_int_list("model.motor_widths", v); },
         [](const RunConfig& c) { return fmt_int_list(c.model.motor_widths); }},
        {"model.joints",
         [](RunConfig& c, const std::string& v) { c.model.joints = parse_int("model.joints", v); },
         [](const RunConfig& c) { return std::to_string(c.model.joints); }},
        {"model.block",
         [](RunConfig& c, const std::string& v) { c.model.block = parse_int("model.block", v); },
         [](const RunConfig& c) { return std::to_string(c.model.block); }},
        {"train.epochs",
         [](RunConfig& c, const std::string& v) { c.train.epochs = parse_int("train.epochs", v); },
         [](const RunConfig& c) { return std::to_string(c.train.epochs); }},
        {"train.lr_weights",
         [](RunConfig& c, const std::string& v) { c.train.lr_weights = parse_double("train.lr_weights", v); },
         [](const RunConfig& c) { return fmt_double(c.train.lr_weights); }},
        {"train.lr_is",
         [](RunConfig& c, const std::string& v) { c.train.lr_is = parse_double("train.lr_is", v); },
         [](const RunConfig& c) { return fmt_double(c.train.lr_is); }},
        {"train.alpha_vision",
         [](RunConfig& c, const std::string& v) { c.train.alpha_vision = parse_double("train.alpha_vision", v); },
         [](const RunConfig& c) { return fmt_double(c.train.alpha_vision); }},
        {"train.alpha_motor",
         [](RunConfig& c, const std::string& v) { c.train.alpha_motor = parse_double("train.alpha_motor", v); },
         [](const RunConfig& c) { return fmt_double(c.train.alpha_motor); }},
        {"train.closed_loop_frac",
         [](RunConfig& c, const std::string& v) { c.train.closed_loop_frac = parse_double("train.closed_loop_frac", v); },
         [](const RunConfig& c) { return fmt_double(c.train.closed_loop_frac); }},
        {"train.seed",
         [](RunConfig& c, const std::string& v) { c.train.seed = parse_u64("train.seed", v); },
         [](const RunConfig& c) { return std::to_string(c.train.seed); }},
        {"plan.t_max",
         [](RunConfig& c, const std::string& v) { c.plan.t_max = parse_int("plan.t_max", v); },
         [](const RunConfig& c) { return std::to_string(c.plan.t_max); }},
        {"plan.compensation",
         [](RunConfig& c, const std::string& v) { c.plan.compensation = parse_double("plan.compensation", v); },
         [](const RunConfig& c) { return fmt_double(c.plan.compensation); }},
        {"plan.scope",
         [](RunConfig& c, const std::string& v) { c.plan.scope = is_scope_from_string(v); },
         [](const RunConfig& c) { return std::string(scope_name(c.plan.scope)); }},
        {"er.iterations",
         [](RunConfig& c, const std::string& v) { c.plan.er.iterations = parse_int("er.iterations", v); },
         [](const RunConfig& c) { return std::to_string(c.plan.er.iterations); }},
        {"er.restarts",
         [](RunConfig& c, const std::string& v) { c.plan.er.restarts = parse_int("er.restarts", v); },
         [](const RunConfig& c) { return std::to_string(c.plan.er.restarts); }},
        {"er.lr",
         [](RunConfig& c, const std::string& v) { c.plan.er.lr = parse_double("er.lr", v); },
         [](const RunConfig& c) { return fmt_double(c.plan.er.lr); }},
        {"er.init_std",
         [](RunConfig& c, const std::string& v) { c.plan.er.init_std = parse_double("er.init_std", v); },
         [](const RunConfig& c) { return fmt_double(c.plan.er.init_std); }},
        {"er.seed",
         [](RunConfig& c, const std::string& v) { c.plan.er.seed = parse_u64("er.seed", v); },
         [](const RunConfig& c) { return std::to_string(c.plan.er.seed); }},
        {"er.alpha_vision",
         [](RunConfig& c, const std::string& v) { c.plan.er.alpha_vision = parse_double("er.alpha_vision", v); },
         [](const RunConfig& c) { return fmt_double(c.plan.er.alpha_vision); }},
        {"er.alpha_motor",
         [](RunConfig& c, const std::string& v) { c.plan.er.alpha_motor = parse_double("er.alpha_motor", v); },
         [](const RunConfig& c) { return fmt_double(c.plan.er.alpha_motor); }},
    };
    return f;
}

} // namespace

void RunConfig::apply(const std::string& key, const std::string& value) {
    for (const auto& f : fields()) {
        if (key == f.key) {
            f.set(*this, value);
            return;
        }
    }
    throw ValidationError("config: unknown key '" + key + "'");
}

void RunConfig::apply_line(const std::string& line) {
    const size_t eq = line.find('=');
    if (eq == std::string::npos) {
        throw ValidationError("config: expected 'key = value', got '" + trim(line) + "'");
    }
    apply(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
}

std::string RunConfig::to_text() const {
    std::string out;
    for (const auto& f : fields()) {
        out += f.key;
        out += " = ";
        out += f.get(*this);
        out += '\n';
    }
    return out;
}

void RunConfig::validate() const {
    model.validate();
    if (train.epochs < 0 || train.lr_weights <= 0 || train.lr_is <= 0) {
        throw ValidationError("config: train.epochs/lr out of range");
    }
    if (train.closed_loop_frac < 0.0 || train.closed_loop_frac > 1.0) {
        throw ValidationError("config: train.closed_loop_frac must be in [0, 1]");
    }
    if (plan.t_max < 0) throw ValidationError("config: plan.t_max must be >= 0");
    if (plan.compensation < 1.0) throw ValidationError("config: plan.compensation must be >= 1");
    if (plan.er.iterations < 0 || plan.er.restarts < 1 || plan.er.lr <= 0 || plan.er.init_std < 0) {
        throw ValidationError("config: er settings out of range");
    }
}

const std::vector<std::string>& RunConfig::known_keys() {
    static const std::vector<std::string> keys = [] {
        std::vector<std::string> k;
        for (const auto& f : fields()) k.push_back(f.key);
        return k;
    }();
    return keys;
}

RunConfig parse_run_config(const std::string& text) {
    RunConfig cfg;
    std::stringstream ss(text);
    std::string line;
    int lineno = 0;
    while (std::getline(ss, line)) {
        ++lineno;
        const size_t hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        if (trim(line).empty()) continue;
        try {
            cfg.apply_line(line);
        } catch (const ValidationError& e) {
            throw ValidationError(std::string(e.what()) + " (line " + std::to_string(lineno) + ")");
        }
    }
    return cfg;
}

RunConfig load_run_config(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw IoError("config '" + path + "': cannot open");
    std::stringstream ss;
    ss << f.rdbuf();
    return parse_run_config(ss.str());
}

} // namespace pdvmrnn
