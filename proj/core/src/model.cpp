#include "crplus/model.hpp"

#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include "crplus/error.hpp"
#include "json.hpp"

namespace crplus {

using nlohmann::json;

double SeverityDist::mean() const {
    double m = 0.0;
    for (const auto& [loss, p] : probabilities) m += static_cast<double>(loss) * p;
    return m;
}

double SeverityDist::second_moment() const {
    double m = 0.0;
    for (const auto& [loss, p] : probabilities) {
        const auto v = static_cast<double>(loss);
        m += v * v * p;
    }
    return m;
}

Loss SeverityDist::max_loss() const {
    return probabilities.empty() ? 0 : probabilities.rbegin()->first;
}

std::optional<std::size_t> Portfolio::find_obligor(std::string_view id) const {
    for (std::size_t i = 0; i < obligors.size(); ++i)
        if (obligors[i].id == id) return i;
    return std::nullopt;
}

std::size_t Portfolio::obligor_index(std::string_view id) const {
    if (auto i = find_obligor(id)) return *i;
    throw InputError("unknown obligor '" + std::string(id) + "'");
}

namespace {

std::string obligor_entity(const Obligor& o) { return "obligor '" + o.id + "'"; }

void add(std::vector<Diagnostic>& out, std::string entity, std::string rule, std::string message) {
    out.push_back({std::move(entity), std::move(rule), std::move(message)});
}

}  // namespace

std::vector<Diagnostic> validate(const Portfolio& portfolio) {
    std::vector<Diagnostic> out;
    const std::size_t n = portfolio.sectors.size();

    std::set<std::string> sector_ids;
    for (const auto& s : portfolio.sectors) {
        const std::string entity = "sector '" + s.id + "'";
        if (s.id.empty() || s.id == "idiosyncratic")
            add(out, entity, "sector-id", "sector id must be non-empty and not 'idiosyncratic'");
        if (!sector_ids.insert(s.id).second)
            add(out, entity, "duplicate-sector", "duplicate sector id '" + s.id + "'");
        if (!(s.alpha > 0.0) || !std::isfinite(s.alpha))
            add(out, entity, "alpha-positive", "alpha must be finite and > 0");
    }

    std::set<std::string> obligor_ids;
    for (const auto& o : portfolio.obligors) {
        const std::string entity = obligor_entity(o);
        if (o.id.empty()) add(out, entity, "obligor-id", "obligor id must be non-empty");
        if (!obligor_ids.insert(o.id).second)
            add(out, entity, "duplicate-obligor", "duplicate obligor id '" + o.id + "'");
        if (!(o.pd >= 0.0) || !std::isfinite(o.pd))
            add(out, entity, "pd-nonnegative", "pd must be finite and >= 0");

        if (o.weights.size() != n + 1) {
            add(out, entity, "weight-dimension",
                "expected " + std::to_string(n + 1) + " loadings, got " +
                    std::to_string(o.weights.size()));
        } else {
            double sum = 0.0;
            bool in_range = true;
            for (double w : o.weights) {
                sum += w;
                in_range = in_range && w >= 0.0 && w <= 1.0;
            }
            if (!in_range) add(out, entity, "weight-range", "every loading must lie in [0, 1]");
            if (std::abs(sum - 1.0) > kWeightSumTolerance) {
                std::ostringstream msg;
                msg.precision(17);
                msg << "loadings sum to " << sum << ", expected 1";
                add(out, entity, "weight-sum", msg.str());
            }
        }

        if (o.severity.probabilities.empty()) {
            add(out, entity, "severity-empty", "severity distribution has no support");
        } else {
            double sum = 0.0;
            bool in_range = true;
            for (const auto& [loss, p] : o.severity.probabilities) {
                sum += p;
                in_range = in_range && p >= 0.0 && p <= 1.0;
            }
            if (!in_range)
                add(out, entity, "severity-range", "severity probabilities must lie in [0, 1]");
            if (std::abs(sum - 1.0) > kSeveritySumTolerance) {
                std::ostringstream msg;
                msg.precision(17);
                msg << "severity probabilities sum to " << sum << ", expected 1";
                add(out, entity, "severity-sum", msg.str());
            }
        }
    }
    return out;
}

namespace {

[[noreturn]] void malformed(const std::string& what) {
    throw InputError("malformed portfolio: " + what);
}

SeverityDist parse_severity(const json& j, const std::string& owner) {
    if (!j.is_object() || !j.contains("type")) malformed(owner + ": severity needs a 'type'");
    const auto type = j.at("type").get<std::string>();
    auto as_loss = [&](const json& v) -> Loss {
        if (!v.is_number_integer()) malformed(owner + ": severity values must be integers");
        const auto value = v.get<std::int64_t>();
        if (value < 0) malformed(owner + ": severity values must be non-negative");
        return static_cast<Loss>(value);
    };
    SeverityDist dist;
    if (type == "deterministic") {
        if (!j.contains("value")) malformed(owner + ": deterministic severity needs 'value'");
        dist.probabilities[as_loss(j.at("value"))] = 1.0;
    } else if (type == "pmf") {
        if (!j.contains("values") || !j.at("values").is_array())
            malformed(owner + ": pmf severity needs a 'values' array");
        for (const auto& row : j.at("values")) {
            if (!row.is_array() || row.size() != 2 || !row[1].is_number())
                malformed(owner + ": pmf rows must be [loss, probability]");
            const Loss loss = as_loss(row[0]);
            if (dist.probabilities.contains(loss))
                malformed(owner + ": repeated severity value " + std::to_string(loss));
            dist.probabilities[loss] = row[1].get<double>();
        }
    } else {
        malformed(owner + ": unknown severity type '" + type + "'");
    }
    return dist;
}

}  // namespace

Portfolio parse_portfolio(std::string_view text, const ParseOptions& options) {
    json doc;
    try {
        doc = json::parse(text);
    } catch (const json::parse_error& e) {
        malformed(e.what());
    }
    if (!doc.is_object()) malformed("top level must be an object");

    Portfolio p;
    try {
        if (doc.contains("sectors")) {
            for (const auto& s : doc.at("sectors")) {
                if (!s.at("alpha").is_number()) malformed("sector alpha must be a number");
                p.sectors.push_back({s.at("id").get<std::string>(), s.at("alpha").get<double>()});
            }
        }
        std::map<std::string, std::size_t> sector_index;
        for (std::size_t k = 0; k < p.sectors.size(); ++k) sector_index[p.sectors[k].id] = k + 1;

        if (!doc.contains("obligors") || !doc.at("obligors").is_array())
            malformed("missing 'obligors' array");
        for (const auto& o : doc.at("obligors")) {
            Obligor ob;
            ob.id = o.at("id").get<std::string>();
            const std::string owner = "obligor '" + ob.id + "'";
            if (!o.at("pd").is_number()) malformed(owner + ": pd must be a number");
            ob.pd = o.at("pd").get<double>();
            ob.weights.assign(p.sectors.size() + 1, 0.0);
            if (o.contains("weights")) {
                for (const auto& [key, value] : o.at("weights").items()) {
                    if (!value.is_number()) malformed(owner + ": weight '" + key + "' must be a number");
                    std::size_t index = 0;
                    if (key != "idiosyncratic") {
                        auto it = sector_index.find(key);
                        if (it == sector_index.end())
                            throw InputError(owner + " references unknown sector '" + key + "'");
                        index = it->second;
                    }
                    ob.weights[index] = value.get<double>();
                }
            }
            if (!o.contains("severity")) malformed(owner + ": missing severity");
            ob.severity = parse_severity(o.at("severity"), owner);
            p.obligors.push_back(std::move(ob));
        }
    } catch (const json::exception& e) {
        malformed(e.what());
    }

    if (options.renormalize_weights) {
        for (auto& o : p.obligors) {
            double sum = 0.0;
            for (double w : o.weights) sum += w;
            if (sum > 0.0 && std::abs(sum - 1.0) > kWeightSumTolerance)
                for (double& w : o.weights) w /= sum;
        }
    }

    if (auto diags = validate(p); !diags.empty()) {
        std::string msg = "invalid portfolio:";
        for (const auto& d : diags) msg += "\n  " + d.entity + " [" + d.rule + "]: " + d.message;
        throw InputError(msg);
    }
    return p;
}

Portfolio load_portfolio(const std::filesystem::path& path, const ParseOptions& options) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw InputError("cannot read portfolio file '" + path.string() + "'");
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse_portfolio(buf.str(), options);
}

std::string serialize_portfolio(const Portfolio& portfolio) {
    json doc = json::object();
    doc["sectors"] = json::array();
    for (const auto& s : portfolio.sectors) doc["sectors"].push_back({{"id", s.id}, {"alpha", s.alpha}});
    doc["obligors"] = json::array();
    for (const auto& o : portfolio.obligors) {
        json weights = json::object();
        for (std::size_t k = 0; k < o.weights.size(); ++k) {
            if (o.weights[k] == 0.0) continue;
            weights[k == 0 ? std::string("idiosyncratic") : portfolio.sectors[k - 1].id] = o.weights[k];
        }
        json severity;
        if (o.severity.is_deterministic() && o.severity.probabilities.begin()->second == 1.0) {
            severity = {{"type", "deterministic"}, {"value", o.severity.probabilities.begin()->first}};
        } else {
            json values = json::array();
            for (const auto& [loss, p] : o.severity.probabilities) values.push_back({loss, p});
            severity = {{"type", "pmf"}, {"values", values}};
        }
        doc["obligors"].push_back({{"id", o.id}, {"pd", o.pd}, {"weights", weights}, {"severity", severity}});
    }
    return doc.dump(2) + "\n";
}

}  // namespace crplus
