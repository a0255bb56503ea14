#pragma once

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "rompc/benchmark.hpp"
#include "rompc/bounding.hpp"
#include "rompc/error.hpp"
#include "rompc/lti.hpp"
#include "rompc/synthesis.hpp"

namespace rompc::io {

using json = nlohmann::json;

/// Row-major nested arrays; an empty matrix keeps its shape in "rows"/"cols" form.
inline json matrix_to_json(const MatrixXd& m)
{
    if (m.rows() == 0 || m.cols() == 0) {
        return json{{"rows", m.rows()}, {"cols", m.cols()}};
    }
    json out = json::array();
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        json row = json::array();
        for (Eigen::Index j = 0; j < m.cols(); ++j) {
            row.push_back(m(i, j));
        }
        out.push_back(std::move(row));
    }
    return out;
}

inline MatrixXd matrix_from_json(const json& j, const char* what)
{
    if (j.is_object()) {
        detail::require(j.contains("rows") && j.contains("cols"), std::string(what) + ": malformed empty matrix");
        return MatrixXd::Zero(j.at("rows").get<Eigen::Index>(), j.at("cols").get<Eigen::Index>());
    }
    detail::require(j.is_array() && !j.empty(), std::string(what) + ": matrix must be a non-empty array");
    const auto rows = static_cast<Eigen::Index>(j.size());
    const auto cols = static_cast<Eigen::Index>(j.at(0).size());
    MatrixXd m(rows, cols);
    for (Eigen::Index i = 0; i < rows; ++i) {
        const auto& row = j.at(static_cast<std::size_t>(i));
        detail::require(row.is_array() && static_cast<Eigen::Index>(row.size()) == cols,
                        std::string(what) + ": ragged matrix");
        for (Eigen::Index k = 0; k < cols; ++k) {
            m(i, k) = row.at(static_cast<std::size_t>(k)).get<double>();
        }
    }
    return m;
}

inline json vector_to_json(const VectorXd& v)
{
    return json(std::vector<double>(v.data(), v.data() + v.size()));
}

inline VectorXd vector_from_json(const json& j, const char* what)
{
    detail::require(j.is_array(), std::string(what) + ": expected an array");
    const auto values = j.get<std::vector<double>>();
    return Eigen::Map<const VectorXd>(values.data(), static_cast<Eigen::Index>(values.size()));
}

inline json config_to_json(const BenchmarkConfig& c)
{
    return json{
        {"n_masses", c.n_masses},
        {"mass", c.mass},
        {"spring", c.spring},
        {"damper", c.damper},
        {"n_modes", c.n_modes},
        {"omega_c", c.omega_c},
        {"scales", c.scales},
        {"scale_floor", c.scale_floor},
        {"dt", c.dt},
        {"horizon", c.horizon},
        {"input_weight", c.input_weight},
        {"wbar", c.wbar},
        {"u_min", c.u_min},
        {"u_max", c.u_max},
        {"z_max", c.z_max},
        {"z_ref", c.z_ref},
        {"lambda_grid", c.lambda_grid},
        {"lambda_count", c.lambda_count},
        {"linesearch_objective", c.linesearch_objective},
        {"lambda_l_factor", c.lambda_l_factor},
        {"scp_passes", c.scp_passes},
        {"delta_floor", c.delta_floor},
        {"tightening_factor", c.tightening_factor},
        {"check_refine", c.check_refine},
        {"random_inputs", c.random_inputs},
        {"seed", c.seed},
    };
}

/// Strict parse: unknown keys and wrong types are errors; missing keys keep their defaults.
inline BenchmarkConfig config_from_json(const json& j)
{
    detail::require(j.is_object(), "config: top level must be an object");
    BenchmarkConfig c;
    const json known = config_to_json(c);
    for (const auto& [key, value] : j.items()) {
        detail::require(known.contains(key), "config: unknown key '" + key + "'");
        const auto& ref = known.at(key);
        const bool ok = (ref.is_number() && value.is_number()) || (ref.is_string() && value.is_string()) ||
                        (ref.is_array() && value.is_array());
        detail::require(ok, "config: key '" + key + "' has the wrong type");
        if (ref.is_number_integer() || ref.is_number_unsigned()) {
            detail::require(value.is_number_integer(), "config: key '" + key + "' must be an integer");
        }
    }
    try {
        const auto get = [&](const char* key, auto& field) {
            if (j.contains(key)) {
                j.at(key).get_to(field);
            }
        };
        get("n_masses", c.n_masses);
        get("mass", c.mass);
        get("spring", c.spring);
        get("damper", c.damper);
        get("n_modes", c.n_modes);
        get("omega_c", c.omega_c);
        get("scales", c.scales);
        get("scale_floor", c.scale_floor);
        get("dt", c.dt);
        get("horizon", c.horizon);
        get("input_weight", c.input_weight);
        get("wbar", c.wbar);
        get("u_min", c.u_min);
        get("u_max", c.u_max);
        get("z_max", c.z_max);
        get("z_ref", c.z_ref);
        get("lambda_grid", c.lambda_grid);
        get("lambda_count", c.lambda_count);
        get("linesearch_objective", c.linesearch_objective);
        get("lambda_l_factor", c.lambda_l_factor);
        get("scp_passes", c.scp_passes);
        get("delta_floor", c.delta_floor);
        get("tightening_factor", c.tightening_factor);
        get("check_refine", c.check_refine);
        get("random_inputs", c.random_inputs);
        get("seed", c.seed);
    } catch (const json::exception& e) {
        throw InvalidArgument(std::string("config: ") + e.what());
    }
    c.validate();
    return c;
}

inline json read_json(const std::filesystem::path& path)
{
    std::ifstream in(path);
    if (!in) {
        throw Error("cannot open " + path.string());
    }
    try {
        return json::parse(in);
    } catch (const json::exception& e) {
        throw InvalidArgument(path.string() + ": " + e.what());
    }
}

inline void write_json(const std::filesystem::path& path, const json& j)
{
    std::ofstream out(path);
    if (!out) {
        throw Error("cannot write " + path.string());
    }
    out << j.dump(2) << '\n';
}

inline BenchmarkConfig load_config(const std::filesystem::path& path)
{
    return config_from_json(read_json(path));
}

/// Parses "a:b:n" into n linearly spaced values.
inline std::vector<double> parse_grid(const std::string& spec)
{
    double a = 0.0;
    double b = 0.0;
    int n = 0;
    char c1 = 0;
    char c2 = 0;
    std::istringstream in(spec);
    if (!(in >> a >> c1 >> b >> c2 >> n) || c1 != ':' || c2 != ':' || !(in >> std::ws).eof()) {
        throw InvalidArgument("lambda grid must look like a:b:n, got '" + spec + "'");
    }
    detail::require(n >= 1 && a > 0.0 && b >= a, "lambda grid needs 0 < a <= b and n >= 1");
    return linspace(a, b, n);
}

inline json certificate_to_json(const GainCertificate& c)
{
    json res = json::array();
    for (const auto& r : c.residuals) {
        res.push_back({{"block", r.name}, {"max_eig", r.value}});
    }
    json prof = json::array();
    for (const auto& s : c.grid_profile) {
        prof.push_back({{"lambda", s.lambda}, {"gamma", std::isfinite(s.gamma) ? json(s.gamma) : json(nullptr)},
                        {"status", s.status}});
    }
    return json{{"kind", to_string(c.kind)},
                {"lambda", c.lambda},
                {"gamma", c.gamma},
                {"P", matrix_to_json(c.P)},
                {"Gamma", matrix_to_json(c.Gamma)},
                {"X", matrix_to_json(c.X)},
                {"residuals", res},
                {"grid_profile", prof},
                {"solver_status", c.solver_status}};
}

inline GainCertificate certificate_from_json(const json& j)
{
    try {
        GainCertificate c;
        const auto kind = j.at("kind").get<std::string>();
        if (kind == "peak") {
            c.kind = CertificateKind::peak;
        } else if (kind == "filtered-peak") {
            c.kind = CertificateKind::filtered_peak;
        } else if (kind == "iqc") {
            c.kind = CertificateKind::iqc;
        } else {
            throw InvalidArgument("certificate: unknown kind '" + kind + "'");
        }
        c.lambda = j.at("lambda").get<double>();
        c.gamma = j.at("gamma").get<double>();
        c.P = matrix_from_json(j.at("P"), "certificate.P");
        c.Gamma = matrix_from_json(j.at("Gamma"), "certificate.Gamma");
        c.X = matrix_from_json(j.at("X"), "certificate.X");
        for (const auto& r : j.at("residuals")) {
            c.residuals.push_back({r.at("block").get<std::string>(), r.at("max_eig").get<double>()});
        }
        for (const auto& s : j.at("grid_profile")) {
            const double g = s.at("gamma").is_null() ? std::numeric_limits<double>::quiet_NaN()
                                                     : s.at("gamma").get<double>();
            c.grid_profile.push_back({s.at("lambda").get<double>(), g, s.at("status").get<std::string>()});
        }
        c.solver_status = j.at("solver_status").get<std::string>();
        return c;
    } catch (const json::exception& e) {
        throw InvalidArgument(std::string("certificate: ") + e.what());
    }
}

inline json filter_to_json(const BoundingFilter& f)
{
    return json{{"Apsi", matrix_to_json(f.Apsi)}, {"Bpsi", matrix_to_json(f.Bpsi)},
                {"Cpsi", matrix_to_json(f.Cpsi)}, {"Dpsi", matrix_to_json(f.Dpsi)},
                {"omega_c", f.omega_c},           {"scales", vector_to_json(f.scales)},
                {"n_w", f.n_w}};
}

inline BoundingFilter filter_from_json(const json& j)
{
    try {
        BoundingFilter f;
        f.Apsi = matrix_from_json(j.at("Apsi"), "filter.Apsi");
        f.Bpsi = matrix_from_json(j.at("Bpsi"), "filter.Bpsi");
        f.Cpsi = matrix_from_json(j.at("Cpsi"), "filter.Cpsi");
        f.Dpsi = matrix_from_json(j.at("Dpsi"), "filter.Dpsi");
        f.omega_c = j.at("omega_c").get<double>();
        f.scales = vector_from_json(j.at("scales"), "filter.scales");
        f.n_w = j.at("n_w").get<int>();
        f.validate();
        return f;
    } catch (const json::exception& e) {
        throw InvalidArgument(std::string("filter: ") + e.what());
    }
}

/// Shortest decimal form that still pins every double (17 significant digits).
inline std::string format_number(double v)
{
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

/// Comma-separated table, header row first; column j of `data` is header[j].
inline void write_csv(const std::filesystem::path& path, const std::vector<std::string>& header, const MatrixXd& data)
{
    detail::require(static_cast<Eigen::Index>(header.size()) == data.cols(), "write_csv: header/column mismatch");
    std::ofstream out(path);
    if (!out) {
        throw Error("cannot write " + path.string());
    }
    for (std::size_t j = 0; j < header.size(); ++j) {
        out << (j ? "," : "") << header[j];
    }
    out << '\n';
    for (Eigen::Index i = 0; i < data.rows(); ++i) {
        for (Eigen::Index j = 0; j < data.cols(); ++j) {
            out << (j ? "," : "") << format_number(data(i, j));
        }
        out << '\n';
    }
}

struct CsvTable {
    std::vector<std::string> header;
    MatrixXd data;
};

inline CsvTable read_csv(const std::filesystem::path& path)
{
    std::ifstream in(path);
    if (!in) {
        throw Error("cannot open " + path.string());
    }
    CsvTable t;
    std::string line;
    detail::require(static_cast<bool>(std::getline(in, line)), path.string() + ": empty CSV");
    {
        std::istringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) {
            t.header.push_back(cell);
        }
    }
    std::vector<std::vector<double>> rows;
    while (std::getline(in, line)) {
        if (line.empty()) {
            continue;
        }
        std::istringstream ss(line);
        std::string cell;
        std::vector<double> row;
        while (std::getline(ss, cell, ',')) {
            row.push_back(std::stod(cell));
        }
        detail::require(row.size() == t.header.size(), path.string() + ": ragged CSV row");
        rows.push_back(std::move(row));
    }
    t.data.resize(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(t.header.size()));
    for (std::size_t i = 0; i < rows.size(); ++i) {
        for (std::size_t j = 0; j < rows[i].size(); ++j) {
            t.data(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = rows[i][j];
        }
    }
    return t;
}

/// 64-bit FNV-1a, hex encoded.
inline std::string fnv1a_hex(const std::string& bytes)
{
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    std::ostringstream out;
    out << std::hex << std::setw(16) << std::setfill('0') << h;
    return out.str();
}

/// Hash of the canonical (compact, key-sorted) config serialization.
inline std::string config_hash(const BenchmarkConfig& c)
{
    return fnv1a_hex(config_to_json(c).dump());
}

inline std::string file_hash(const std::filesystem::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw Error("cannot open " + path.string());
    }
    std::ostringstream ss;
    ss << in.rdbuf();
    return fnv1a_hex(ss.str());
}

} // namespace rompc::io
