#ifndef RVESCOPE_MODEL_IO_HPP
#define RVESCOPE_MODEL_IO_HPP

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <string>
#include <variant>
#include <vector>

#include "rvescope/errors.hpp"
#include "rvescope/model.hpp"

namespace rvescope {

// Checkpoint format: versioned key-value text. Parameters are serialized as
// C99 hexfloats, so save -> load round-trips bit-exactly.

namespace detail {

inline std::string hexfloat(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%a", v);
    return buf;
}

inline void write_vector(std::ostream& out, const std::string& key, const std::vector<double>& v) {
    out << key << " =";
    for (double x : v) out << ' ' << hexfloat(x);
    out << '\n';
}

struct KvFile {
    std::vector<std::pair<std::string, std::string>> entries;

    const std::string& get(const std::string& key, const std::string& path) const {
        for (const auto& [k, v] : entries)
            if (k == key) return v;
        throw IoError("checkpoint " + path + ": missing key '" + key + "'");
    }

    static KvFile parse(std::istream& in) {
        KvFile kv;
        std::string line;
        while (std::getline(in, line)) {
            const auto eq = line.find('=');
            if (eq == std::string::npos) continue;
            std::string key = line.substr(0, eq);
            key.erase(0, key.find_first_not_of(" \t"));
            key.erase(key.find_last_not_of(" \t") + 1);
            kv.entries.emplace_back(key, line.substr(eq + 1));
        }
        return kv;
    }
};

inline std::vector<double> parse_doubles(const std::string& s, std::size_t expect,
                                         const std::string& what) {
    std::vector<double> out;
    out.reserve(expect);
    const char* p = s.c_str();
    char* end = nullptr;
    while (true) {
        const double v = std::strtod(p, &end);
        if (end == p) break;
        out.push_back(v);
        p = end;
    }
    if (expect != 0 && out.size() != expect)
        throw IoError("checkpoint: expected " + std::to_string(expect) + " values for " + what +
                      ", got " + std::to_string(out.size()));
    return out;
}

} // namespace detail

inline void save_model(const std::string& path, const LogisticModel& m) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write checkpoint " + path);
    out << "rvescope-model v1\n";
    out << "kind = logistic\n";
    out << "ls = " << m.ls << '\n';
    out << "dx = " << m.dim_x() << '\n';
    out << "lambda = " << detail::hexfloat(m.lambda) << '\n';
    detail::write_vector(out, "weights", m.weights);
    out << "bias = " << detail::hexfloat(m.bias) << '\n';
    if (!out) throw IoError("short write to checkpoint " + path);
}

inline void save_model(const std::string& path, const MlpModel& m) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write checkpoint " + path);
    out << "rvescope-model v1\n";
    out << "kind = mlp\n";
    out << "ls = " << m.ls << '\n';
    out << "dx = " << m.dim_x() << '\n';
    out << "hidden = " << MlpModel::kHidden << '\n';
    out << "activation = tanh\n";
    out << "lambda = " << detail::hexfloat(m.lambda) << '\n';
    detail::write_vector(out, "hidden_weights", m.hidden_weights);
    detail::write_vector(out, "hidden_bias", m.hidden_bias);
    detail::write_vector(out, "output_weights", m.output_weights);
    out << "output_bias = " << detail::hexfloat(m.output_bias) << '\n';
    if (!out) throw IoError("short write to checkpoint " + path);
}

using AnyModel = std::variant<LogisticModel, MlpModel>;

inline AnyModel load_model(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open checkpoint " + path);
    std::string header;
    std::getline(in, header);
    if (header != "rvescope-model v1")
        throw IoError("checkpoint " + path + ": unrecognized header '" + header + "'");
    const auto kv = detail::KvFile::parse(in);
    const std::string kind = [&] {
        std::string k = kv.get("kind", path);
        k.erase(0, k.find_first_not_of(" \t"));
        k.erase(k.find_last_not_of(" \t") + 1);
        return k;
    }();
    const int ls = std::atoi(kv.get("ls", path).c_str());
    const int dx = std::atoi(kv.get("dx", path).c_str());
    const double lambda = std::strtod(kv.get("lambda", path).c_str(), nullptr);
    if (kind == "logistic") {
        LogisticModel m;
        m.ls = ls;
        m.lambda = lambda;
        m.weights = detail::parse_doubles(kv.get("weights", path), static_cast<std::size_t>(dx), "weights");
        m.bias = detail::parse_doubles(kv.get("bias", path), 1, "bias")[0];
        return m;
    }
    if (kind == "mlp") {
        MlpModel m;
        m.ls = ls;
        m.lambda = lambda;
        m.hidden_weights = detail::parse_doubles(kv.get("hidden_weights", path),
                                                 static_cast<std::size_t>(MlpModel::kHidden) * dx,
                                                 "hidden_weights");
        m.hidden_bias = detail::parse_doubles(kv.get("hidden_bias", path), MlpModel::kHidden, "hidden_bias");
        m.output_weights =
            detail::parse_doubles(kv.get("output_weights", path), MlpModel::kHidden, "output_weights");
        m.output_bias = detail::parse_doubles(kv.get("output_bias", path), 1, "output_bias")[0];
        return m;
    }
    throw IoError("checkpoint " + path + ": unknown model kind '" + kind + "'");
}

} // namespace rvescope

#endif
