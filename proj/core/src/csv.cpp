#include "apekit/csv.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <istream>
#include <limits>
#include <ostream>
#include <sstream>

namespace apekit {

namespace {

constexpr int kPanelCoreColumns = 9;
constexpr int kGrowthCategories = 12;

const std::vector<std::string>& panel_core_names() {
    static const std::vector<std::string> names = {
        "household_id", "wave",       "log_consumption", "log_family_income", "belief_mean",
        "belief_var",   "log_assets", "age",             "weight"};
    return names;
}

const std::vector<std::string>& growth_point_names() {
    static const std::vector<std::string> names = {
        "points_lt0",   "points_0_3",   "points_3_5",   "points_5_6",
        "points_6_7",   "points_7_8",   "points_8_10",  "points_10_13",
        "points_13_15", "points_15_20", "points_20_25", "points_gt25"};
    return names;
}

std::string join_csv(const std::vector<std::string>& fields) {
    std::string out;
    for (std::size_t i = 0; i < fields.size(); ++i) {
        if (i > 0) out += ',';
        out += fields[i];
    }
    return out;
}

// Splits one physical line on commas.  The formats are numeric-only, so
// no quoting rules apply; a stray '\r' from CRLF files is stripped.
std::vector<std::string> split_line(std::string line) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    std::vector<std::string> fields;
    std::size_t start = 0;
    while (true) {
        const std::size_t comma = line.find(',', start);
        if (comma == std::string::npos) {
            fields.push_back(line.substr(start));
            break;
        }
        fields.push_back(line.substr(start, comma - start));
        start = comma + 1;
    }
    return fields;
}

// Reads the next line; strips a UTF-8 byte-order mark on the first one.
bool next_line(std::istream& in, std::string& line, int& lineno) {
    if (!std::getline(in, line)) return false;
    ++lineno;
    if (lineno == 1 && line.size() >= 3 && line.compare(0, 3, "\xEF\xBB\xBF") == 0) {
        line.erase(0, 3);
    }
    return true;
}

bool is_blank(const std::string& line) {
    for (char c : line)
        if (c != '\r' && c != ' ' && c != '\t') return false;
    return true;
}

[[noreturn]] void field_error(int line, const std::string& column, const std::string& what) {
    throw CsvDataError(line, "column '" + column + "': " + what);
}

double parse_double(const std::string& field, int line, const std::string& column) {
    if (field.empty()) field_error(line, column, "missing value");
    double value = 0.0;
    const char* begin = field.data();
    const char* end = begin + field.size();
    const auto result = std::from_chars(begin, end, value);
    if (result.ec != std::errc{} || result.ptr != end)
        field_error(line, column, "not a number: '" + field + "'");
    if (!std::isfinite(value)) field_error(line, column, "non-finite value: '" + field + "'");
    return value;
}

template <typename Int>
Int parse_int(const std::string& field, int line, const std::string& column) {
    if (field.empty()) field_error(line, column, "missing value");
    Int value = 0;
    const char* begin = field.data();
    const char* end = begin + field.size();
    const auto result = std::from_chars(begin, end, value);
    if (result.ec != std::errc{} || result.ptr != end)
        field_error(line, column, "not an integer: '" + field + "'");
    return value;
}

// Round-trip-exact double formatting (shortest form up to 17 significant
// digits, locale independent).
std::string format_double(double value) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", value);
    // Prefer the shortest representation that still round-trips.
    for (int precision = 1; precision < 17; ++precision) {
        char shorter[40];
        const int len = std::snprintf(shorter, sizeof(shorter), "%.*g", precision, value);
        double back = 0.0;
        const auto res = std::from_chars(shorter, shorter + len, back);
        if (res.ec == std::errc{} && res.ptr == shorter + len && back == value) return shorter;
    }
    return buf;
}

void expect_columns(const std::vector<std::string>& fields, std::size_t expected, int line) {
    if (fields.size() != expected) {
        throw CsvDataError(line, "expected " + std::to_string(expected) + " fields, found " +
                                     std::to_string(fields.size()));
    }
}

std::ifstream open_input(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw CsvDataError(0, "cannot open file: " + path);
    return in;
}

std::ofstream open_output(const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw CsvDataError(0, "cannot open file for writing: " + path);
    return out;
}

// Shared reader skeleton for the two survey formats: header check, then
// per-row parsing with strict/lenient error routing.
template <typename Row, typename ParseRow>
void read_survey_rows(std::istream& in, const std::string& expected_header,
                      const SurveyReadOptions& options, std::vector<Row>& rows,
                      std::vector<CsvRowError>& skipped, const ParseRow& parse_row) {
    std::string line;
    int lineno = 0;
    if (!next_line(in, line, lineno)) throw CsvDataError(0, "missing header row");
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line != expected_header)
        throw CsvDataError(1, "unexpected header: '" + line + "'");
    while (next_line(in, line, lineno)) {
        if (is_blank(line)) continue;
        try {
            rows.push_back(parse_row(split_line(line), lineno));
        } catch (const CsvDataError& err) {
            if (!options.lenient) throw;
            skipped.push_back({err.line(), err.what()});
        } catch (const std::invalid_argument& err) {
            if (!options.lenient) throw CsvDataError(lineno, err.what());
            skipped.push_back({lineno, err.what()});
        }
    }
}

}  // namespace

CsvDataError::CsvDataError(int line, const std::string& message)
    : std::runtime_error(line > 0 ? "line " + std::to_string(line) + ": " + message : message),
      line_(line) {}

std::string csv_number(double value) {
    if (!std::isfinite(value)) throw std::invalid_argument("csv_number: non-finite value");
    return format_double(value);
}

const std::string& panel_core_header() {
    static const std::string header = join_csv(panel_core_names());
    return header;
}

Panel read_panel_csv(std::istream& in) {
    std::string line;
    int lineno = 0;
    if (!next_line(in, line, lineno)) throw CsvDataError(0, "missing header row");
    const std::vector<std::string> header = split_line(line);
    const auto& core = panel_core_names();
    if (header.size() < core.size())
        throw CsvDataError(1, "header is missing core columns; expected it to start with '" +
                                  panel_core_header() + "'");
    for (std::size_t i = 0; i < core.size(); ++i) {
        if (header[i] != core[i])
            throw CsvDataError(1, "core column " + std::to_string(i + 1) + " must be '" + core[i] +
                                      "', found '" + header[i] + "'");
    }

    Panel panel;
    for (std::size_t i = core.size(); i < header.size(); ++i) {
        const std::string& name = header[i];
        if (name.empty()) throw CsvDataError(1, "empty control column name");
        for (const std::string& c : core)
            if (name == c) throw CsvDataError(1, "control column shadows core column '" + name + "'");
        for (const std::string& seen : panel.control_names)
            if (name == seen) throw CsvDataError(1, "duplicate control column '" + name + "'");
        panel.control_names.push_back(name);
    }
    panel.controls.assign(panel.control_names.size(), {});

    while (next_line(in, line, lineno)) {
        if (is_blank(line)) continue;
        const std::vector<std::string> fields = split_line(line);
        expect_columns(fields, header.size(), lineno);
        PanelRow row;
        row.household_id = parse_int<std::int64_t>(fields[0], lineno, core[0]);
        row.wave = parse_int<int>(fields[1], lineno, core[1]);
        row.log_consumption = parse_double(fields[2], lineno, core[2]);
        row.log_family_income = parse_double(fields[3], lineno, core[3]);
        row.belief_mean = parse_double(fields[4], lineno, core[4]);
        row.belief_var = parse_double(fields[5], lineno, core[5]);
        row.log_assets = parse_double(fields[6], lineno, core[6]);
        row.age = parse_double(fields[7], lineno, core[7]);
        row.weight = parse_double(fields[8], lineno, core[8]);
        if (!(row.weight > 0.0)) field_error(lineno, core[8], "weight must be positive");
        panel.rows.push_back(row);
        for (std::size_t c = 0; c < panel.controls.size(); ++c) {
            panel.controls[c].push_back(parse_double(fields[kPanelCoreColumns + c], lineno,
                                                     panel.control_names[c]));
        }
    }

    try {
        panel.prepare();
    } catch (const std::invalid_argument& err) {
        throw CsvDataError(0, err.what());
    }
    return panel;
}

Panel read_panel_csv(const std::string& path) {
    std::ifstream in = open_input(path);
    return read_panel_csv(in);
}

void write_panel_csv(const Panel& panel, std::ostream& out) {
    if (panel.controls.size() != panel.control_names.size())
        throw std::invalid_argument("write_panel_csv: control columns not aligned with names");
    for (const auto& col : panel.controls)
        if (col.size() != panel.rows.size())
            throw std::invalid_argument("write_panel_csv: control column length mismatch");

    out << panel_core_header();
    for (const std::string& name : panel.control_names) out << ',' << name;
    out << '\n';
    for (std::size_t i = 0; i < panel.rows.size(); ++i) {
        const PanelRow& r = panel.rows[i];
        out << r.household_id << ',' << r.wave << ',' << format_double(r.log_consumption) << ','
            << format_double(r.log_family_income) << ',' << format_double(r.belief_mean) << ','
            << format_double(r.belief_var) << ',' << format_double(r.log_assets) << ','
            << format_double(r.age) << ',' << format_double(r.weight);
        for (const auto& col : panel.controls) out << ',' << format_double(col[i]);
        out << '\n';
    }
}

void write_panel_csv(const Panel& panel, const std::string& path) {
    std::ofstream out = open_output(path);
    write_panel_csv(panel, out);
    if (!out) throw CsvDataError(0, "write failed: " + path);
}

const std::string& growth_survey_header() {
    static const std::string header = [] {
        std::vector<std::string> names = {"household_id", "wave"};
        names.insert(names.end(), growth_point_names().begin(), growth_point_names().end());
        names.push_back("magnitude_if_negative");
        return join_csv(names);
    }();
    return header;
}

const std::string& minmax_survey_header() {
    static const std::string header = "household_id,wave,min_earn,max_earn,prob_below_mid";
    return header;
}

SurveyFormat detect_survey_format(const std::string& header_line) {
    std::string line = header_line;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.size() >= 3 && line.compare(0, 3, "\xEF\xBB\xBF") == 0) line.erase(0, 3);
    if (line == growth_survey_header()) return SurveyFormat::growth;
    if (line == minmax_survey_header()) return SurveyFormat::min_max;
    throw CsvDataError(1, "header matches neither survey format: '" + line + "'");
}

GrowthSurveyFile read_growth_survey_csv(std::istream& in, const SurveyReadOptions& options) {
    GrowthSurveyFile file;
    read_survey_rows(
        in, growth_survey_header(), options, file.rows, file.skipped,
        [](const std::vector<std::string>& fields, int lineno) {
            expect_columns(fields, 2 + kGrowthCategories + 1, lineno);
            GrowthSurveyRow row;
            row.household_id = parse_int<std::int64_t>(fields[0], lineno, "household_id");
            row.wave = parse_int<int>(fields[1], lineno, "wave");
            std::vector<int> points(kGrowthCategories, 0);
            for (int j = 0; j < kGrowthCategories; ++j) {
                points[static_cast<std::size_t>(j)] = parse_int<int>(
                    fields[static_cast<std::size_t>(2 + j)], lineno,
                    growth_point_names()[static_cast<std::size_t>(j)]);
            }
            std::optional<double> magnitude;
            const std::string& mag_field = fields[static_cast<std::size_t>(2 + kGrowthCategories)];
            if (!mag_field.empty())
                magnitude = parse_double(mag_field, lineno, "magnitude_if_negative");
            row.response = GrowthResponse(std::move(points), magnitude);
            return row;
        });
    return file;
}

GrowthSurveyFile read_growth_survey_csv(const std::string& path, const SurveyReadOptions& options) {
    std::ifstream in = open_input(path);
    return read_growth_survey_csv(in, options);
}

MinMaxSurveyFile read_minmax_survey_csv(std::istream& in, const SurveyReadOptions& options) {
    MinMaxSurveyFile file;
    read_survey_rows(in, minmax_survey_header(), options, file.rows, file.skipped,
                     [](const std::vector<std::string>& fields, int lineno) {
                         expect_columns(fields, 5, lineno);
                         MinMaxSurveyRow row;
                         row.household_id =
                             parse_int<std::int64_t>(fields[0], lineno, "household_id");
                         row.wave = parse_int<int>(fields[1], lineno, "wave");
                         row.response = MinMaxResponse(parse_double(fields[2], lineno, "min_earn"),
                                                       parse_double(fields[3], lineno, "max_earn"),
                                                       parse_double(fields[4], lineno,
                                                                    "prob_below_mid"));
                         return row;
                     });
    return file;
}

MinMaxSurveyFile read_minmax_survey_csv(const std::string& path, const SurveyReadOptions& options) {
    std::ifstream in = open_input(path);
    return read_minmax_survey_csv(in, options);
}

void write_growth_survey_csv(const std::vector<GrowthSurveyRow>& rows, std::ostream& out) {
    out << growth_survey_header() << '\n';
    for (const GrowthSurveyRow& row : rows) {
        if (row.response.points.size() != static_cast<std::size_t>(kGrowthCategories))
            throw std::invalid_argument("write_growth_survey_csv: response must have 12 categories");
        out << row.household_id << ',' << row.wave;
        for (int p : row.response.points) out << ',' << p;
        out << ',';
        if (row.response.magnitude_if_negative)
            out << format_double(*row.response.magnitude_if_negative);
        out << '\n';
    }
}

void write_growth_survey_csv(const std::vector<GrowthSurveyRow>& rows, const std::string& path) {
    std::ofstream out = open_output(path);
    write_growth_survey_csv(rows, out);
    if (!out) throw CsvDataError(0, "write failed: " + path);
}

void write_minmax_survey_csv(const std::vector<MinMaxSurveyRow>& rows, std::ostream& out) {
    out << minmax_survey_header() << '\n';
    for (const MinMaxSurveyRow& row : rows) {
        out << row.household_id << ',' << row.wave << ',' << format_double(row.response.min_earn)
            << ',' << format_double(row.response.max_earn) << ','
            << format_double(row.response.prob_below_mid) << '\n';
    }
}

void write_minmax_survey_csv(const std::vector<MinMaxSurveyRow>& rows, const std::string& path) {
    std::ofstream out = open_output(path);
    write_minmax_survey_csv(rows, out);
    if (!out) throw CsvDataError(0, "write failed: " + path);
}

}  // namespace apekit
