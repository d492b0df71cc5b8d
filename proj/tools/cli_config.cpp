#include "cli_config.hpp"

#include <cmath>
#include <fstream>
#include <limits>
#include <utility>

namespace apekit::cli {

using nlohmann::json;

json load_config_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("cannot open config file: " + path);
    json root;
    try {
        root = json::parse(in);
    } catch (const json::parse_error& e) {
        throw ConfigError("config file " + path + " is not valid JSON: " + e.what());
    }
    if (!root.is_object()) throw ConfigError("config file " + path + " must hold a JSON object");
    return root;
}

Section::Section(const json& node, std::string path) : node_(&node), path_(std::move(path)) {
    if (!node_->is_object()) throw ConfigError("config field '" + path_ + "' must be an object");
}

std::string Section::field_path(const std::string& name) const {
    return path_.empty() ? name : path_ + "." + name;
}

void Section::fail(const std::string& name, const std::string& what) const {
    throw ConfigError("config field '" + field_path(name) + "': " + what);
}

bool Section::has(const std::string& name) const { return node_->contains(name); }

const json* Section::look(const std::string& name) {
    const auto it = node_->find(name);
    if (it == node_->end()) return nullptr;
    consumed_.insert(name);
    return &*it;
}

const json& Section::require(const std::string& name, const char* type_name) {
    const json* value = look(name);
    if (value == nullptr) fail(name, std::string("required ") + type_name + " is missing");
    return *value;
}

double Section::number(const std::string& name) {
    const json& v = require(name, "number");
    if (!v.is_number()) fail(name, "must be a number");
    return v.get<double>();
}

double Section::number_or(const std::string& name, double fallback) {
    const json* v = look(name);
    if (v == nullptr) return fallback;
    if (!v->is_number()) fail(name, "must be a number");
    return v->get<double>();
}

int Section::integer(const std::string& name) {
    const json& v = require(name, "integer");
    if (!v.is_number_integer() && !v.is_number_unsigned()) fail(name, "must be an integer");
    return v.get<int>();
}

int Section::integer_or(const std::string& name, int fallback) {
    const json* v = look(name);
    if (v == nullptr) return fallback;
    if (!v->is_number_integer() && !v->is_number_unsigned()) fail(name, "must be an integer");
    return v->get<int>();
}

std::int64_t Section::integer64(const std::string& name) {
    const json& v = require(name, "integer");
    if (!v.is_number_integer() && !v.is_number_unsigned()) fail(name, "must be an integer");
    return v.get<std::int64_t>();
}

std::uint64_t Section::seed(const std::string& name) {
    const json& v = require(name, "integer");
    if (v.is_number_unsigned()) return v.get<std::uint64_t>();
    if (v.is_number_integer()) {
        const std::int64_t s = v.get<std::int64_t>();
        if (s < 0) fail(name, "must be a non-negative integer");
        return static_cast<std::uint64_t>(s);
    }
    fail(name, "must be a non-negative integer");
}

bool Section::boolean_or(const std::string& name, bool fallback) {
    const json* v = look(name);
    if (v == nullptr) return fallback;
    if (!v->is_boolean()) fail(name, "must be true or false");
    return v->get<bool>();
}

std::string Section::text(const std::string& name) {
    const json& v = require(name, "string");
    if (!v.is_string()) fail(name, "must be a string");
    return v.get<std::string>();
}

std::string Section::text_or(const std::string& name, const std::string& fallback) {
    const json* v = look(name);
    if (v == nullptr) return fallback;
    if (!v->is_string()) fail(name, "must be a string");
    return v->get<std::string>();
}

std::vector<double> Section::number_array(const std::string& name) {
    const json& v = require(name, "array");
    if (!v.is_array()) fail(name, "must be an array of numbers");
    std::vector<double> out;
    out.reserve(v.size());
    for (const json& item : v) {
        if (!item.is_number()) fail(name, "must be an array of numbers");
        out.push_back(item.get<double>());
    }
    return out;
}

std::vector<int> Section::integer_array_or(const std::string& name,
                                           const std::vector<int>& fallback) {
    const json* v = look(name);
    if (v == nullptr) return fallback;
    if (!v->is_array()) fail(name, "must be an array of integers");
    std::vector<int> out;
    out.reserve(v->size());
    for (const json& item : *v) {
        if (!item.is_number_integer() && !item.is_number_unsigned())
            fail(name, "must be an array of integers");
        out.push_back(item.get<int>());
    }
    return out;
}

std::vector<std::string> Section::text_array_or(const std::string& name,
                                                const std::vector<std::string>& fallback) {
    const json* v = look(name);
    if (v == nullptr) return fallback;
    if (!v->is_array()) fail(name, "must be an array of strings");
    std::vector<std::string> out;
    out.reserve(v->size());
    for (const json& item : *v) {
        if (!item.is_string()) fail(name, "must be an array of strings");
        out.push_back(item.get<std::string>());
    }
    return out;
}

std::optional<Section> Section::object(const std::string& name) {
    const json* v = look(name);
    if (v == nullptr) return std::nullopt;
    if (!v->is_object()) fail(name, "must be an object");
    return Section(*v, field_path(name));
}

void Section::finish() const {
    std::vector<std::string> unknown;
    for (const auto& [key, _] : node_->items()) {
        if (consumed_.count(key) == 0) unknown.push_back(field_path(key));
    }
    if (unknown.empty()) return;
    std::string msg = "unknown config field";
    if (unknown.size() > 1) msg += 's';
    for (std::size_t i = 0; i < unknown.size(); ++i) {
        msg += (i == 0 ? ": '" : ", '");
        msg += unknown[i];
        msg += '\'';
    }
    throw ConfigError(msg);
}

RunHeader open_run(const nlohmann::json& config, const std::string& command) {
    RunHeader header{Section(config, ""), 0, 1};
    const std::string declared = header.root.text("command");
    if (declared != command) {
        throw ConfigError("config file declares command '" + declared + "' but '" + command +
                          "' was invoked");
    }
    header.master_seed = header.root.seed("seed");
    header.threads = header.root.integer_or("threads", 1);
    if (header.threads < 1) header.root.fail("threads", "must be >= 1");
    return header;
}

Regime parse_regime(const std::string& text, const Section& where, const std::string& field) {
    if (text == "rational") return Regime::rational;
    if (text == "adaptive") return Regime::adaptive;
    where.fail(field, "must be 'rational' or 'adaptive', got '" + text + "'");
}

AssetControl parse_asset_control(const std::string& text, const Section& where,
                                 const std::string& field) {
    if (text == "linear") return AssetControl::linear;
    if (text == "quadratic") return AssetControl::quadratic;
    if (text == "spline") return AssetControl::spline;
    where.fail(field, "must be 'linear', 'quadratic', or 'spline', got '" + text + "'");
}

FitForm parse_fit_form(const std::string& text, const Section& where, const std::string& field) {
    if (text == "levels") return FitForm::levels;
    if (text == "first_differences") return FitForm::first_differences;
    where.fail(field, "must be 'levels' or 'first_differences', got '" + text + "'");
}

TaxSchedule tax_from_section(Section section) {
    const bool by_scale = section.has("scale");
    const bool by_level = section.has("level_rel") || section.has("mean_gross");
    if (by_scale && by_level)
        section.fail("scale", "give either 'scale' or 'level_rel'+'mean_gross', not both");
    try {
        if (by_scale) {
            const double scale = section.number("scale");
            const double tau = section.number("tau");
            section.finish();
            return TaxSchedule::from_scale(scale, tau);
        }
        const double level_rel = section.number("level_rel");
        const double tau = section.number("tau");
        const double mean_gross = section.number("mean_gross");
        section.finish();
        return TaxSchedule(level_rel, tau, mean_gross);
    } catch (const std::invalid_argument& e) {
        throw ConfigError("config field '" + section.path() + "': " + e.what());
    }
}

LifecycleModel model_from_config(Section& parent, const std::string& key) {
    std::optional<Section> block = parent.object(key);
    Regime regime = Regime::rational;
    if (block && block->has("regime"))
        regime = parse_regime(block->text("regime"), *block, "regime");

    LifecycleModel model = LifecycleModel::baseline(regime);
    if (block) {
        Section& m = *block;
        model.horizon = m.integer_or("horizon", model.horizon);
        model.retirement = m.integer_or("retirement", model.retirement);
        model.contribution_start = m.integer_or("contribution_start", model.contribution_start);
        model.risk_aversion = m.number_or("risk_aversion", model.risk_aversion);
        model.discount = m.number_or("discount", model.discount);
        model.interest = m.number_or("interest", model.interest);
        if (m.has("age_profile")) model.age_profile = m.number_array("age_profile");
        model.var_eta1 = m.number_or("var_eta1", model.var_eta1);
        model.var_v = m.number_or("var_v", model.var_v);
        model.var_eps = m.number_or("var_eps", model.var_eps);
        model.net_income_scale = m.number_or("net_income_scale", model.net_income_scale);
        if (auto tax = m.object("tax")) model.tax = tax_from_section(std::move(*tax));
        if (auto p = m.object("pension")) {
            model.pension.bend1 = p->number_or("bend1", model.pension.bend1);
            model.pension.bend2 = p->number_or("bend2", model.pension.bend2);
            model.pension.rate1 = p->number_or("rate1", model.pension.rate1);
            model.pension.rate2 = p->number_or("rate2", model.pension.rate2);
            model.pension.rate3 = p->number_or("rate3", model.pension.rate3);
            model.pension.target_replacement =
                p->number_or("target_replacement", model.pension.target_replacement);
            model.pension.contribution_cap =
                p->number_or("contribution_cap", model.pension.contribution_cap);
            model.pension.taxable_share =
                p->number_or("taxable_share", model.pension.taxable_share);
            p->finish();
        }
        if (auto a = m.object("adaptive")) {
            model.adaptive.gamma_adapt = a->number_or("gamma_adapt", model.adaptive.gamma_adapt);
            model.adaptive.var_u = a->number_or("var_u", model.adaptive.var_u);
            a->finish();
        }
        if (auto g = m.object("grid")) {
            model.grid.asset_nodes = g->integer_or("asset_nodes", model.grid.asset_nodes);
            model.grid.asset_income_multiple =
                g->number_or("asset_income_multiple", model.grid.asset_income_multiple);
            model.grid.belief_nodes = g->integer_or("belief_nodes", model.grid.belief_nodes);
            model.grid.belief_sd_span =
                g->number_or("belief_sd_span", model.grid.belief_sd_span);
            model.grid.pension_nodes = g->integer_or("pension_nodes", model.grid.pension_nodes);
            model.grid.quadrature_nodes =
                g->integer_or("quadrature_nodes", model.grid.quadrature_nodes);
            g->finish();
        }
        m.finish();
    }
    try {
        model.validate();
    } catch (const std::exception& e) {
        throw ConfigError("config field '" + (parent.path().empty() ? key : parent.path() + "." + key) +
                          "': " + e.what());
    }
    return model;
}

}  // namespace apekit::cli
