#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "msset/data.hpp"
#include "msset/score_test.hpp"
#include "msset/univariate.hpp"

namespace msset {

enum class DatasetFormat { wide, long_form, counts };

DatasetFormat dataset_format_from_name(const std::string& name);
std::string dataset_format_name(DatasetFormat format);

// CSV ingestion. Formats:
//   wide:   header "study_id,y1,s1,y2,s2,..."; a study's empty y/s pair
//           means the outcome was not reported.
//   long:   header "study_id,outcome,y,s" with 1-based outcome indices.
//   counts: header "study_id,outcome,a,b,c,d" for binary outcomes; the
//           measurement is the naive (logOR, se) and the table is kept.
// Parsed datasets are validated; malformed rows raise ParseError with the
// line number, validation failures raise ValidationError.
MetaDataset parse_dataset(const std::string& path, DatasetFormat format,
                          bool continuity = true);
MetaDataset parse_dataset_stream(std::istream& in, DatasetFormat format,
                                 bool continuity = true, const std::string& name = "<stream>");

void emit_dataset(const MetaDataset& data, DatasetFormat format, std::ostream& out);

// Funnel-plot export for one outcome: per reporting study,
// "effect,stderr,pooled_estimate,ci_low_bound,ci_high_bound" where pooled
// is the DL random-effects weighted mean and the bounds trace the
// pseudo-95% funnel pooled -/+ 1.96 * stderr.
void funnel_export(const MetaDataset& data, int outcome, std::ostream& out);
void funnel_export_file(const MetaDataset& data, int outcome, const std::string& path);

struct ConcordanceTable {
    // counts[msset decision][comparator decision], decisions in {0, 1}.
    long long counts[2][2] = {{0, 0}, {0, 0}};
    double alpha = 0.10;
    std::string comparator;

    long long total() const {
        return counts[0][0] + counts[0][1] + counts[1][0] + counts[1][1];
    }
};

struct BatchDatasetRow {
    std::string path;
    bool skipped = false;
    std::string skip_reason;
    double msset_p = 1.0;
    double egger1_p = 1.0;
    double egger2_p = 1.0;
    double egger_bonf_p = 1.0;
};

struct BatchConcordanceResult {
    ConcordanceTable vs_egger1;
    ConcordanceTable vs_egger2;
    ConcordanceTable vs_egger_bonf;
    std::vector<BatchDatasetRow> rows;
    int analyzed = 0;
};

// Batch concordance over a manifest of dataset files (one "path" or
// "path,format" per line, '#' comments). Screening per dataset: (a) at
// least 10 studies, (b) exactly two outcomes, (c) at least one study
// reporting both. Screened-in datasets get MSSET, per-outcome Egger and
// Egger-Bonferroni decisions dichotomized at alpha.
BatchConcordanceResult batch_concordance(const std::string& manifest_path, double alpha);

void write_batch_csv(const BatchConcordanceResult& result, std::ostream& out);
void write_batch_tables(const BatchConcordanceResult& result, std::ostream& out);

// JSON report for the test command; stable key set on every success,
// including the intermediates (score, information blocks, sigma_aa,
// lambda_bar) needed to audit a result.
struct TestReportInputs {
    const MetaDataset& data;
    const MssetOptions& options;
    bool run_msset_test = true;
    bool run_egger = true;
    bool run_begg = true;
    double alpha = 0.10;
    bool egger_fixed_effect = false;  // classic tau2=0 Egger variant
    double begg_tau2 = 0.0;           // classic Begg uses 0
};

std::string test_report_json(const TestReportInputs& inputs);
std::string test_report_text(const TestReportInputs& inputs);

}  // namespace msset
