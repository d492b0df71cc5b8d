// CSV import/export for the toolkit's file formats: the household panel
// and the two survey-response layouts.  Readers validate the header and
// every field, reporting malformed input with 1-based line numbers;
// writers emit locale-independent, round-trip-exact numeric text, so a
// file written by the toolkit reads back to identical values.
#pragma once

#include <cstdint>
#include <iosfwd>
#include <stdexcept>
#include <string>
#include <vector>

#include "apekit/econometrics.hpp"
#include "apekit/elicitation.hpp"

namespace apekit {

// Malformed CSV input.  `line` is the 1-based physical line the problem
// was found on, or 0 when it is not tied to a single line (missing
// header, cross-row duplicate keys).
class CsvDataError : public std::runtime_error {
  public:
    CsvDataError(int line, const std::string& message);
    int line() const { return line_; }

  private:
    int line_ = 0;
};

// Diagnostic for a row skipped under lenient reading.
struct CsvRowError {
    int line = 0;
    std::string message;
};

// Shortest decimal text that parses back to exactly this double
// (locale-independent).  All toolkit writers use it, so emitted CSVs
// round-trip bit-for-bit; rejects non-finite values.
std::string csv_number(double value);

// ---------------------------------------------------------------------
// Household panel.
//
// Column contract: the core columns, in order,
//   household_id,wave,log_consumption,log_family_income,belief_mean,
//   belief_var,log_assets,age,weight
// followed by zero or more named control columns.  Header row required;
// every field of every row must hold a finite number (the regression
// machinery has no missing-data semantics, so the reader rejects blank
// or non-finite fields in control columns too, not only core ones).
// ---------------------------------------------------------------------

// The core header prefix, without trailing newline.
const std::string& panel_core_header();

// Reads and prepares a panel (rows sorted by household and wave, control
// columns aligned).  Throws CsvDataError on malformed input.
Panel read_panel_csv(std::istream& in);
Panel read_panel_csv(const std::string& path);

// Writes rows in their current order plus any control columns.
void write_panel_csv(const Panel& panel, std::ostream& out);
void write_panel_csv(const Panel& panel, const std::string& path);

// ---------------------------------------------------------------------
// Survey responses, keyed by household id and wave.
//
// Growth format: twelve integer point columns, one per response
// category from "less than 0%" to "more than 25%", plus the optional
// magnitude follow-up for the negative category (blank when absent).
// Min/max format: three numeric columns (minimum and maximum expected
// earnings and the probability of earning less than their midpoint).
// ---------------------------------------------------------------------

struct GrowthSurveyRow {
    std::int64_t household_id = 0;
    int wave = 0;
    GrowthResponse response;
};

struct MinMaxSurveyRow {
    std::int64_t household_id = 0;
    int wave = 0;
    MinMaxResponse response;
};

struct SurveyReadOptions {
    // When set, malformed rows are skipped and recorded instead of
    // aborting the read.  Header problems always abort.
    bool lenient = false;
};

struct GrowthSurveyFile {
    std::vector<GrowthSurveyRow> rows;
    std::vector<CsvRowError> skipped;
};

struct MinMaxSurveyFile {
    std::vector<MinMaxSurveyRow> rows;
    std::vector<CsvRowError> skipped;
};

const std::string& growth_survey_header();
const std::string& minmax_survey_header();

// Which survey layout a header line announces.
enum class SurveyFormat { growth, min_max };

// Inspects a header line (as read from the file, '\r' tolerated) and
// returns the format, or throws CsvDataError when it matches neither.
SurveyFormat detect_survey_format(const std::string& header_line);

GrowthSurveyFile read_growth_survey_csv(std::istream& in, const SurveyReadOptions& options = {});
GrowthSurveyFile read_growth_survey_csv(const std::string& path,
                                        const SurveyReadOptions& options = {});
MinMaxSurveyFile read_minmax_survey_csv(std::istream& in, const SurveyReadOptions& options = {});
MinMaxSurveyFile read_minmax_survey_csv(const std::string& path,
                                        const SurveyReadOptions& options = {});

void write_growth_survey_csv(const std::vector<GrowthSurveyRow>& rows, std::ostream& out);
void write_growth_survey_csv(const std::vector<GrowthSurveyRow>& rows, const std::string& path);
void write_minmax_survey_csv(const std::vector<MinMaxSurveyRow>& rows, std::ostream& out);
void write_minmax_survey_csv(const std::vector<MinMaxSurveyRow>& rows, const std::string& path);

}  // namespace apekit
