// Run-configuration loading for the command-line tool: a JSON file per
// run with a `command` field, a master `seed`, and per-command blocks.
// Every field is typed and every unknown key is rejected with its full
// dotted path, so a typo never silently becomes a default.
#pragma once

#include <cstdint>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"

#include "apekit/counterfactuals.hpp"
#include "apekit/lifecycle.hpp"

namespace apekit::cli {

// Invalid or inconsistent run configuration (process exit code 2).
class ConfigError : public std::runtime_error {
  public:
    explicit ConfigError(const std::string& message) : std::runtime_error(message) {}
};

// Parses the configuration file; IO and JSON syntax problems become
// ConfigError with the path and parser message.
nlohmann::json load_config_file(const std::string& path);

// Typed cursor over one JSON object.  Reads record which keys were
// consumed; finish() then rejects any leftover key by dotted path.
// Subsections returned by object()/objects() must be finished too.
class Section {
  public:
    Section(const nlohmann::json& node, std::string path);

    bool has(const std::string& name) const;

    double number(const std::string& name);
    double number_or(const std::string& name, double fallback);
    int integer(const std::string& name);
    int integer_or(const std::string& name, int fallback);
    std::int64_t integer64(const std::string& name);
    std::uint64_t seed(const std::string& name);
    bool boolean_or(const std::string& name, bool fallback);
    std::string text(const std::string& name);
    std::string text_or(const std::string& name, const std::string& fallback);
    std::vector<double> number_array(const std::string& name);
    std::vector<int> integer_array_or(const std::string& name, const std::vector<int>& fallback);
    std::vector<std::string> text_array_or(const std::string& name,
                                           const std::vector<std::string>& fallback);
    std::optional<Section> object(const std::string& name);

    // Throws ConfigError listing every key that was never consumed.
    void finish() const;

    const std::string& path() const { return path_; }
    [[noreturn]] void fail(const std::string& name, const std::string& what) const;

  private:
    std::string field_path(const std::string& name) const;
    const nlohmann::json& require(const std::string& name, const char* type_name);
    const nlohmann::json* look(const std::string& name);

    const nlohmann::json* node_;
    std::string path_;
    std::set<std::string> consumed_;
};

// Opens the root section of a run configuration, checks that its
// `command` field names the invoked command, and consumes the uniform
// fields.  On return, `master_seed` and `threads` are filled and the
// section is ready for command-specific reads.
struct RunHeader {
    Section root;
    std::uint64_t master_seed = 0;
    int threads = 1;  // upper bound on worker parallelism
};

RunHeader open_run(const nlohmann::json& config, const std::string& command);

// "rational" / "adaptive".
Regime parse_regime(const std::string& text, const Section& where, const std::string& field);

// "linear" / "quadratic" / "spline".
AssetControl parse_asset_control(const std::string& text, const Section& where,
                                 const std::string& field);

// "levels" / "first_differences".
FitForm parse_fit_form(const std::string& text, const Section& where, const std::string& field);

// Tax schedule from a config object: either {"scale", "tau"} or
// {"level_rel", "tau", "mean_gross"}.
TaxSchedule tax_from_section(Section section);

// Life-cycle model from the optional "model" block: starts from
// LifecycleModel::baseline under the block's "regime" (default
// rational), applies field overrides, and validates.  Overriding the
// tax schedule or income variances does not re-anchor the baseline age
// profile; supply an explicit "age_profile" to move it.
LifecycleModel model_from_config(Section& parent, const std::string& key = "model");

}  // namespace apekit::cli
