#include "riskswitch/config.hpp"

#include <fstream>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

namespace riskswitch {

namespace {

using nlohmann::json;

Eigen::MatrixXd read_matrix(const json& rows) {
  if (!rows.is_array() || rows.empty() || !rows[0].is_array())
    throw ConfigParseError("matrix fields must be arrays of row arrays");
  Eigen::MatrixXd m(rows.size(), rows[0].size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i].size() != static_cast<std::size_t>(m.cols()))
      throw ConfigParseError("matrix rows must have equal length");
    for (std::size_t j = 0; j < rows[i].size(); ++j) m(i, j) = rows[i][j].get<double>();
  }
  return m;
}

Eigen::VectorXd read_vector(const json& arr) {
  Eigen::VectorXd v(arr.size());
  for (std::size_t i = 0; i < arr.size(); ++i) v[i] = arr[i].get<double>();
  return v;
}

Poly read_poly(const json& arr) {
  Poly p;
  p.c = arr.get<std::vector<double>>();
  if (p.c.empty()) throw ConfigParseError("polynomial coefficient lists must be nonempty");
  return p;
}

RegimeChain read_chain(const json& c) {
  const std::string family = c.at("family").get<std::string>();
  if (family == "frozen") return RegimeChain::frozen();
  if (family == "constant") return RegimeChain::constant(read_matrix(c.at("rates")));
  if (family == "age_weighted" || family == "age_weighted_literal") {
    std::vector<double> scale;
    if (c.contains("scale")) scale = c.at("scale").get<std::vector<double>>();
    const Eigen::MatrixXd p = read_matrix(c.at("switch"));
    return family == "age_weighted" ? RegimeChain::age_weighted(p, scale)
                                    : RegimeChain::age_weighted_literal(p, scale);
  }
  if (family == "polynomial")
    return RegimeChain::polynomial(c.at("coeffs").get<std::vector<std::vector<double>>>(),
                                   read_matrix(c.at("switch")));
  if (family == "tabulated") {
    std::vector<Eigen::MatrixXd> table;
    for (const auto& node : c.at("table")) table.push_back(read_matrix(node));
    return RegimeChain::tabulated(c.at("dy").get<double>(), std::move(table));
  }
  throw ConfigParseError("unknown chain family: " + family);
}

}  // namespace

std::string fnv1a_hex(const std::string& bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char b : bytes) {
    h ^= b;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

MarketSpec RunConfig::spec(double theta_override) const {
  const double th = std::isnan(theta_override) ? theta : theta_override;
  return MarketSpec(assets, brownian_dim, th, regime_counts, rate, drift, vol, jumps, eta,
                    constraint);
}

RunConfig load_config(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigParseError("cannot open config file: " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  const std::string bytes = buf.str();

  json root;
  try {
    root = json::parse(bytes);
  } catch (const json::parse_error& e) {
    throw ConfigParseError(std::string("json parse error: ") + e.what());
  }

  RunConfig cfg;
  cfg.hash = fnv1a_hex(bytes);
  try {
    const json& m = root.at("market");
    cfg.theta = m.at("theta").get<double>();
    cfg.assets = m.at("assets").get<int>();
    cfg.brownian_dim = m.at("brownian_dim").get<int>();
    for (const auto& r : m.at("rate")) cfg.rate.push_back(read_poly(r));
    for (const auto& row : m.at("drift")) {
      std::vector<Poly> per_asset;
      for (const auto& p : row) per_asset.push_back(read_poly(p));
      cfg.drift.push_back(std::move(per_asset));
    }
    for (const auto& combo : m.at("vol")) {
      std::vector<Eigen::MatrixXd> powers;
      for (const auto& mat : combo) powers.push_back(read_matrix(mat));
      cfg.vol.push_back(std::move(powers));
    }
    if (m.contains("jumps"))
      for (const auto& jm : m.at("jumps")) {
        JumpMeasure measure;
        measure.lo = jm.value("lo", 0.0);
        measure.hi = jm.value("hi", 0.0);
        measure.mass = jm.value("mass", 0.0);
        if (jm.contains("atoms"))
          for (const auto& atom : jm.at("atoms")) {
            measure.atom_z.push_back(atom.at(0).get<double>());
            measure.atom_w.push_back(atom.at(1).get<double>());
          }
        cfg.jumps.push_back(measure);
      }
    for (const auto& row : m.at("eta")) {
      std::vector<EtaMap> per_source;
      for (const auto& e : row)
        per_source.push_back(EtaMap{e.at("slope").get<double>(), e.value("shift", 0.0)});
      cfg.eta.push_back(std::move(per_source));
    }
    const json& box = m.at("constraint");
    cfg.constraint.lower = read_vector(box.at("lower"));
    cfg.constraint.upper = read_vector(box.at("upper"));
    if (box.contains("max_total") && !box.at("max_total").is_null())
      cfg.constraint.max_total = box.at("max_total").get<double>();
    cfg.constraint.delta = box.value("delta", 1e-3);

    for (const auto& c : root.at("chains")) {
      cfg.chains.push_back(read_chain(c));
      cfg.regime_counts.push_back(cfg.chains.back().states());
    }

    const json& num = root.at("numerics");
    cfg.horizon = num.at("horizon").get<double>();
    cfg.dt = num.at("dt").get<double>();
    cfg.y_step = num.value("y_step", cfg.dt);
    cfg.y_max = num.value("y_max", 2.0);
    cfg.n_paths = num.value("n_paths", 10000LL);
    cfg.seed = num.value("seed", 1ULL);

    const json& init = root.at("initial");
    cfg.v0 = init.at("v").get<double>();
    cfg.x0 = init.at("regimes").get<std::vector<int>>();
    cfg.ages0 = init.at("ages").get<std::vector<double>>();

    if (root.contains("probes"))
      for (const auto& p : root.at("probes"))
        cfg.probes.push_back(ProbePoint{p.at("regimes").get<std::vector<int>>(),
                                        p.at("ages").get<std::vector<double>>()});

    if (root.contains("sweep")) {
      const json& sw = root.at("sweep");
      if (sw.contains("v")) cfg.sweep_v = sw.at("v").get<std::vector<double>>();
      if (sw.contains("T")) cfg.sweep_horizon = sw.at("T").get<std::vector<double>>();
      if (sw.contains("theta")) cfg.sweep_theta = sw.at("theta").get<std::vector<double>>();
    }
  } catch (const json::exception& e) {
    throw ConfigParseError(std::string("config field error: ") + e.what());
  }
  return cfg;
}

}  // namespace riskswitch
