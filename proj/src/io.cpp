#include "msset/io.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

#include "json.hpp"
#include "msset/model.hpp"

namespace msset {

DatasetFormat dataset_format_from_name(const std::string& name) {
    if (name == "wide") return DatasetFormat::wide;
    if (name == "long") return DatasetFormat::long_form;
    if (name == "counts") return DatasetFormat::counts;
    throw ValidationError("unknown dataset format: " + name);
}

std::string dataset_format_name(DatasetFormat format) {
    switch (format) {
        case DatasetFormat::wide: return "wide";
        case DatasetFormat::long_form: return "long";
        case DatasetFormat::counts: return "counts";
    }
    return "?";
}

namespace {

std::vector<std::string> split_csv(const std::string& line) {
    std::vector<std::string> cells;
    std::string cell;
    for (char c : line) {
        if (c == ',') {
            cells.push_back(cell);
            cell.clear();
        } else if (c != '\r') {
            cell.push_back(c);
        }
    }
    cells.push_back(cell);
    return cells;
}

[[noreturn]] void bad_row(const std::string& name, int line, const std::string& what) {
    throw ParseError(name + ":" + std::to_string(line) + ": " + what);
}

double parse_number(const std::string& cell, const std::string& name, int line) {
    try {
        std::size_t pos = 0;
        const double x = std::stod(cell, &pos);
        if (pos != cell.size()) throw std::invalid_argument(cell);
        return x;
    } catch (const std::exception&) {
        bad_row(name, line, "malformed number '" + cell + "'");
    }
}

long long parse_count(const std::string& cell, const std::string& name, int line) {
    const double x = parse_number(cell, name, line);
    if (x < 0 || x != std::floor(x)) bad_row(name, line, "expected a nonnegative integer, got '" + cell + "'");
    return static_cast<long long>(x);
}

struct Row {
    int line;
    std::vector<std::string> cells;
};

std::vector<Row> read_rows(std::istream& in) {
    std::vector<Row> rows;
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty() || line == "\r") continue;
        rows.push_back(Row{line_no, split_csv(line)});
    }
    return rows;
}

MetaDataset parse_wide(const std::vector<Row>& rows, const std::string& name) {
    if (rows.empty()) throw ParseError(name + ": empty file");
    const auto& header = rows.front().cells;
    if (header.size() < 3 || header[0] != "study_id" || header.size() % 2 == 0)
        bad_row(name, rows.front().line, "wide header must be study_id,y1,s1,...");
    const int j = static_cast<int>((header.size() - 1) / 2);
    for (int k = 0; k < j; ++k) {
        const std::string yk = "y" + std::to_string(k + 1);
        const std::string sk = "s" + std::to_string(k + 1);
        if (header[static_cast<std::size_t>(1 + 2 * k)] != yk ||
            header[static_cast<std::size_t>(2 + 2 * k)] != sk)
            bad_row(name, rows.front().line, "wide header must be study_id,y1,s1,...");
    }

    MetaDataset data;
    data.n_outcomes = j;
    for (int k = 0; k < j; ++k) data.outcome_labels.push_back("y" + std::to_string(k + 1));

    for (std::size_t r = 1; r < rows.size(); ++r) {
        const auto& row = rows[r];
        if (static_cast<int>(row.cells.size()) != 1 + 2 * j)
            bad_row(name, row.line, "expected " + std::to_string(1 + 2 * j) + " cells");
        StudyRecord study;
        study.id = row.cells[0];
        if (study.id.empty()) bad_row(name, row.line, "empty study id");
        study.measurements.resize(static_cast<std::size_t>(j));
        for (int k = 0; k < j; ++k) {
            const std::string& yc = row.cells[static_cast<std::size_t>(1 + 2 * k)];
            const std::string& sc = row.cells[static_cast<std::size_t>(2 + 2 * k)];
            if (yc.empty() && sc.empty()) continue;
            if (yc.empty() || sc.empty())
                bad_row(name, row.line, "outcome " + std::to_string(k + 1) +
                                            " must have both y and s or neither");
            study.measurements[static_cast<std::size_t>(k)] = OutcomeMeasurement{
                parse_number(yc, name, row.line), parse_number(sc, name, row.line)};
        }
        data.studies.push_back(std::move(study));
    }
    return data;
}

// Shared scaffolding for the long and counts formats: rows keyed by
// (study, 1-based outcome), studies kept in first-appearance order.
struct LongIndex {
    MetaDataset data;
    std::map<std::string, std::size_t> study_index;

    StudyRecord& study_for(const std::string& id, int j_total) {
        auto it = study_index.find(id);
        if (it == study_index.end()) {
            StudyRecord s;
            s.id = id;
            s.measurements.resize(static_cast<std::size_t>(j_total));
            s.counts.resize(static_cast<std::size_t>(j_total));
            data.studies.push_back(std::move(s));
            it = study_index.emplace(id, data.studies.size() - 1).first;
        }
        return data.studies[it->second];
    }
};

int max_outcome(const std::vector<Row>& rows, const std::string& name, std::size_t header_size) {
    int j = 0;
    for (std::size_t r = 1; r < rows.size(); ++r) {
        const auto& row = rows[r];
        if (row.cells.size() != header_size)
            bad_row(name, row.line, "expected " + std::to_string(header_size) + " cells");
        const double k = parse_number(row.cells[1], name, row.line);
        if (k < 1 || k != std::floor(k))
            bad_row(name, row.line, "outcome must be a 1-based index");
        j = std::max(j, static_cast<int>(k));
    }
    if (j == 0) throw ParseError(name + ": no data rows");
    return j;
}

MetaDataset parse_long(const std::vector<Row>& rows, const std::string& name) {
    if (rows.empty()) throw ParseError(name + ": empty file");
    if (rows.front().cells != std::vector<std::string>{"study_id", "outcome", "y", "s"})
        bad_row(name, rows.front().line, "long header must be study_id,outcome,y,s");
    const int j = max_outcome(rows, name, 4);

    LongIndex idx;
    idx.data.n_outcomes = j;
    for (int k = 0; k < j; ++k) idx.data.outcome_labels.push_back("y" + std::to_string(k + 1));
    for (std::size_t r = 1; r < rows.size(); ++r) {
        const auto& row = rows[r];
        const int k = static_cast<int>(parse_number(row.cells[1], name, row.line)) - 1;
        StudyRecord& study = idx.study_for(row.cells[0], j);
        if (study.reports(k)) bad_row(name, row.line, "duplicate (study, outcome) row");
        study.measurements[static_cast<std::size_t>(k)] = OutcomeMeasurement{
            parse_number(row.cells[2], name, row.line), parse_number(row.cells[3], name, row.line)};
    }
    return idx.data;
}

MetaDataset parse_counts(const std::vector<Row>& rows, const std::string& name, bool continuity) {
    if (rows.empty()) throw ParseError(name + ": empty file");
    if (rows.front().cells !=
        std::vector<std::string>{"study_id", "outcome", "a", "b", "c", "d"})
        bad_row(name, rows.front().line, "counts header must be study_id,outcome,a,b,c,d");
    const int j = max_outcome(rows, name, 6);

    LongIndex idx;
    idx.data.n_outcomes = j;
    for (int k = 0; k < j; ++k) idx.data.outcome_labels.push_back("y" + std::to_string(k + 1));
    for (std::size_t r = 1; r < rows.size(); ++r) {
        const auto& row = rows[r];
        const int k = static_cast<int>(parse_number(row.cells[1], name, row.line)) - 1;
        StudyRecord& study = idx.study_for(row.cells[0], j);
        if (study.reports(k)) bad_row(name, row.line, "duplicate (study, outcome) row");
        CountTable t;
        t.a = parse_count(row.cells[2], name, row.line);
        t.b = parse_count(row.cells[3], name, row.line);
        t.c = parse_count(row.cells[4], name, row.line);
        t.d = parse_count(row.cells[5], name, row.line);
        if (t.a + t.c <= 0 || t.b + t.d <= 0) bad_row(name, row.line, "empty margin in 2x2 table");
        try {
            study.measurements[static_cast<std::size_t>(k)] = logor_measurement(t, continuity);
        } catch (const ComputationError& e) {
            bad_row(name, row.line, e.what());
        }
        study.counts[static_cast<std::size_t>(k)] = t;
    }
    return idx.data;
}

}  // namespace

MetaDataset parse_dataset_stream(std::istream& in, DatasetFormat format, bool continuity,
                                 const std::string& name) {
    const std::vector<Row> rows = read_rows(in);
    MetaDataset data;
    switch (format) {
        case DatasetFormat::wide: data = parse_wide(rows, name); break;
        case DatasetFormat::long_form: data = parse_long(rows, name); break;
        case DatasetFormat::counts: data = parse_counts(rows, name, continuity); break;
    }
    const ValidationReport report = validate_dataset(data);
    if (!report.ok())
        throw ValidationError(name + ": dataset validation failed:\n" + report.to_string());
    return data;
}

MetaDataset parse_dataset(const std::string& path, DatasetFormat format, bool continuity) {
    std::ifstream in(path);
    if (!in) throw ValidationError("cannot open dataset file: " + path);
    return parse_dataset_stream(in, format, continuity, path);
}

namespace {

// enough digits for an exact double round-trip
std::string num(double x) {
    std::ostringstream os;
    os.precision(17);
    os << x;
    return os.str();
}

}  // namespace

void emit_dataset(const MetaDataset& data, DatasetFormat format, std::ostream& out) {
    switch (format) {
        case DatasetFormat::wide: {
            out << "study_id";
            for (int k = 0; k < data.n_outcomes; ++k)
                out << ",y" << (k + 1) << ",s" << (k + 1);
            out << '\n';
            for (const auto& study : data.studies) {
                out << study.id;
                for (int k = 0; k < data.n_outcomes; ++k) {
                    if (study.reports(k))
                        out << ',' << num(study.at(k).effect) << ',' << num(study.at(k).se);
                    else
                        out << ",,";
                }
                out << '\n';
            }
            return;
        }
        case DatasetFormat::long_form: {
            out << "study_id,outcome,y,s\n";
            for (const auto& study : data.studies)
                for (int k = 0; k < data.n_outcomes; ++k)
                    if (study.reports(k))
                        out << study.id << ',' << (k + 1) << ',' << num(study.at(k).effect)
                            << ',' << num(study.at(k).se) << '\n';
            return;
        }
        case DatasetFormat::counts: {
            out << "study_id,outcome,a,b,c,d\n";
            for (const auto& study : data.studies)
                for (int k = 0; k < data.n_outcomes; ++k) {
                    if (!study.reports(k)) continue;
                    if (!study.has_counts(k))
                        throw ValidationError("counts format: study " + study.id +
                                              " has no 2x2 table for outcome " +
                                              std::to_string(k + 1));
                    const auto& t = *study.counts[static_cast<std::size_t>(k)];
                    out << study.id << ',' << (k + 1) << ',' << t.a << ',' << t.b << ',' << t.c
                        << ',' << t.d << '\n';
                }
            return;
        }
    }
}

void funnel_export(const MetaDataset& data, int outcome, std::ostream& out) {
    if (outcome < 0 || outcome >= data.n_outcomes)
        throw ValidationError("funnel export: outcome index out of range");
    const std::vector<int> reporting = data.reporting_studies(outcome);
    const int mj = static_cast<int>(reporting.size());
    if (mj == 0) throw ComputationError("outcome never reported");

    Eigen::VectorXd y(mj), s(mj);
    for (int i = 0; i < mj; ++i) {
        const auto& meas = data.studies[static_cast<std::size_t>(reporting[i])].at(outcome);
        y(i) = meas.effect;
        s(i) = meas.se;
    }
    const double tau2 = mj >= 2 ? dl_tau2(y, s) : 0.0;
    const Eigen::ArrayXd w = (s.array().square() + tau2).inverse();
    const double pooled = (w * y.array()).sum() / w.sum();

    out << "effect,stderr,pooled_estimate,ci_low_bound,ci_high_bound\n";
    for (int i = 0; i < mj; ++i)
        out << num(y(i)) << ',' << num(s(i)) << ',' << num(pooled) << ','
            << num(pooled - 1.96 * s(i)) << ',' << num(pooled + 1.96 * s(i)) << '\n';
}

void funnel_export_file(const MetaDataset& data, int outcome, const std::string& path) {
    std::ostringstream buffer;
    funnel_export(data, outcome, buffer);
    std::ofstream out(path);
    if (!out) throw ValidationError("cannot open output file: " + path);
    out << buffer.str();
}

// --- batch concordance ------------------------------------------------------

BatchConcordanceResult batch_concordance(const std::string& manifest_path, double alpha) {
    std::ifstream in(manifest_path);
    if (!in) throw ValidationError("cannot open manifest: " + manifest_path);

    const std::filesystem::path base = std::filesystem::path(manifest_path).parent_path();
    std::vector<std::pair<std::string, DatasetFormat>> entries;
    std::string line;
    while (std::getline(in, line)) {
        const auto hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        while (!line.empty() && (line.back() == '\r' || line.back() == ' ')) line.pop_back();
        if (line.empty()) continue;
        const auto comma = line.find(',');
        DatasetFormat format = DatasetFormat::wide;
        std::string path = line;
        if (comma != std::string::npos) {
            path = line.substr(0, comma);
            format = dataset_format_from_name(line.substr(comma + 1));
        }
        std::filesystem::path p(path);
        if (p.is_relative()) p = base / p;
        entries.emplace_back(p.string(), format);
    }
    if (entries.empty()) throw ValidationError("empty manifest: " + manifest_path);

    BatchConcordanceResult result;
    result.vs_egger1.alpha = result.vs_egger2.alpha = result.vs_egger_bonf.alpha = alpha;
    result.vs_egger1.comparator = "egger1";
    result.vs_egger2.comparator = "egger2";
    result.vs_egger_bonf.comparator = "egger_bonferroni";

    for (const auto& [path, format] : entries) {
        BatchDatasetRow row;
        row.path = path;

        MetaDataset data;
        try {
            data = parse_dataset(path, format);
        } catch (const Error& e) {
            row.skipped = true;
            row.skip_reason = e.what();
            result.rows.push_back(std::move(row));
            continue;
        }

        // screening per criteria (a) size, (b) bivariate, (c) overlap
        if (data.study_count() < 10) {
            row.skipped = true;
            row.skip_reason = "criterion (a): fewer than 10 studies";
        } else if (data.n_outcomes != 2) {
            row.skipped = true;
            row.skip_reason = "criterion (b): not a bivariate dataset";
        } else {
            bool overlap = false;
            for (const auto& study : data.studies)
                if (study.reports(0) && study.reports(1)) overlap = true;
            if (!overlap) {
                row.skipped = true;
                row.skip_reason = "criterion (c): no study reports both outcomes";
            }
        }
        if (row.skipped) {
            result.rows.push_back(std::move(row));
            continue;
        }

        try {
            const MssetResult msset = run_msset(data, MssetOptions{});
            std::vector<TestResult> eggers;
            for (int k = 0; k < 2; ++k) {
                const std::vector<int> reporting = data.reporting_studies(k);
                Eigen::VectorXd y(reporting.size()), s(reporting.size());
                for (std::size_t i = 0; i < reporting.size(); ++i) {
                    const auto& meas = data.studies[static_cast<std::size_t>(reporting[i])].at(k);
                    y(static_cast<int>(i)) = meas.effect;
                    s(static_cast<int>(i)) = meas.se;
                }
                eggers.push_back(egger_test(transform_snd_precision(data, k, dl_tau2(y, s))));
            }
            const TestResult bonf = bonferroni_combine(eggers);
            row.msset_p = msset.p_value;
            row.egger1_p = eggers[0].p_value;
            row.egger2_p = eggers[1].p_value;
            row.egger_bonf_p = bonf.p_value;
        } catch (const Error& e) {
            row.skipped = true;
            row.skip_reason = std::string("analysis failed: ") + e.what();
            result.rows.push_back(std::move(row));
            continue;
        }

        const int mdec = row.msset_p <= alpha ? 1 : 0;
        result.vs_egger1.counts[mdec][row.egger1_p <= alpha ? 1 : 0]++;
        result.vs_egger2.counts[mdec][row.egger2_p <= alpha ? 1 : 0]++;
        result.vs_egger_bonf.counts[mdec][row.egger_bonf_p <= alpha ? 1 : 0]++;
        ++result.analyzed;
        result.rows.push_back(std::move(row));
    }
    return result;
}

void write_batch_csv(const BatchConcordanceResult& result, std::ostream& out) {
    out << "path,status,msset_p,egger1_p,egger2_p,egger_bonferroni_p,skip_reason\n";
    for (const auto& row : result.rows) {
        out << row.path << ',' << (row.skipped ? "skipped" : "analyzed") << ',';
        if (row.skipped)
            out << ",,,," << row.skip_reason << '\n';
        else
            out << row.msset_p << ',' << row.egger1_p << ',' << row.egger2_p << ','
                << row.egger_bonf_p << ",\n";
    }
}

void write_batch_tables(const BatchConcordanceResult& result, std::ostream& out) {
    for (const auto* table : {&result.vs_egger1, &result.vs_egger2, &result.vs_egger_bonf}) {
        out << "MSSET vs " << table->comparator << " (alpha = " << table->alpha << ")\n";
        out << "              comparator=0  comparator=1\n";
        out << "  msset=0     " << table->counts[0][0] << "             " << table->counts[0][1]
            << '\n';
        out << "  msset=1     " << table->counts[1][0] << "             " << table->counts[1][1]
            << "\n\n";
    }
}

// --- reports ----------------------------------------------------------------

namespace {

nlohmann::json matrix_json(const Eigen::MatrixXd& m) {
    nlohmann::json rows = nlohmann::json::array();
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
        nlohmann::json row = nlohmann::json::array();
        for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
        rows.push_back(row);
    }
    return rows;
}

nlohmann::json vector_json(const Eigen::VectorXd& v) {
    nlohmann::json out = nlohmann::json::array();
    for (Eigen::Index i = 0; i < v.size(); ++i) out.push_back(v(i));
    return out;
}

struct UnivariateRun {
    std::vector<TestResult> egger;
    TestResult egger_bonf;
    std::vector<TestResult> begg;
    TestResult begg_bonf;
};

UnivariateRun run_univariate(const MetaDataset& data, const TestReportInputs& inputs) {
    UnivariateRun run;
    const MetaDataset working = apply_variance_smoothing(data, inputs.options);
    for (int k = 0; k < working.n_outcomes; ++k) {
        const std::vector<int> reporting = working.reporting_studies(k);
        Eigen::VectorXd y(reporting.size()), s(reporting.size());
        for (std::size_t i = 0; i < reporting.size(); ++i) {
            const auto& meas = working.studies[static_cast<std::size_t>(reporting[i])].at(k);
            y(static_cast<int>(i)) = meas.effect;
            s(static_cast<int>(i)) = meas.se;
        }
        if (inputs.run_egger) {
            const double tau2 = inputs.egger_fixed_effect ? 0.0 : dl_tau2(y, s);
            run.egger.push_back(egger_test(transform_snd_precision(working, k, tau2)));
        }
        if (inputs.run_begg) run.begg.push_back(begg_test(y, s, inputs.begg_tau2));
    }
    if (inputs.run_egger) run.egger_bonf = bonferroni_combine(run.egger);
    if (inputs.run_begg) run.begg_bonf = bonferroni_combine(run.begg);
    return run;
}

nlohmann::json test_result_json(const TestResult& r) {
    return {{"statistic", r.statistic}, {"p_value", r.p_value}, {"df", r.df},
            {"method", r.method}};
}

}  // namespace

std::string test_report_json(const TestReportInputs& inputs) {
    nlohmann::json j;
    j["alpha"] = inputs.alpha;
    j["dataset"] = {
        {"studies", inputs.data.study_count()},
        {"outcomes", inputs.data.n_outcomes},
        {"labels", inputs.data.outcome_labels},
    };
    nlohmann::json m_per = nlohmann::json::array();
    for (int k = 0; k < inputs.data.n_outcomes; ++k)
        m_per.push_back(inputs.data.reporting_count(k));
    j["dataset"]["m_per_outcome"] = m_per;

    if (inputs.run_msset_test) {
        const MssetResult r = run_msset(inputs.data, inputs.options);
        j["msset"] = {
            {"statistic", r.statistic},
            {"df", r.df},
            {"p_value", r.p_value},
            {"lambda_bar", r.lambda_bar},
            {"score", vector_json(r.score)},
            {"b0", vector_json(r.fit.b0)},
            {"tau2_hat", vector_json(r.fit.tau2)},
            {"tau2_truncated",
             std::vector<bool>(r.fit.tau2_truncated.begin(), r.fit.tau2_truncated.end())},
            {"i_aa", vector_json(r.info.i_aa)},
            {"i_ab", vector_json(r.info.i_ab)},
            {"i_bb", vector_json(r.info.i_bb)},
            {"i0_aa", matrix_json(r.info.aa_inverse_matrix())},
            {"sigma_aa", matrix_json(r.sigma_aa)},
            {"m_total", r.m_total},
            {"m_per_outcome", r.m_per_outcome},
            {"degenerate_null_fit", r.degenerate_null_fit},
            {"reject", r.p_value <= inputs.alpha},
        };
    }
    if (inputs.run_egger || inputs.run_begg) {
        const UnivariateRun run = run_univariate(inputs.data, inputs);
        if (inputs.run_egger) {
            nlohmann::json per = nlohmann::json::array();
            for (const auto& r : run.egger) per.push_back(test_result_json(r));
            j["egger"] = {{"per_outcome", per},
                          {"bonferroni", test_result_json(run.egger_bonf)},
                          {"fixed_effect_scale", inputs.egger_fixed_effect}};
        }
        if (inputs.run_begg) {
            nlohmann::json per = nlohmann::json::array();
            for (const auto& r : run.begg) per.push_back(test_result_json(r));
            j["begg"] = {{"per_outcome", per},
                         {"bonferroni", test_result_json(run.begg_bonf)},
                         {"tau2", inputs.begg_tau2}};
        }
    }
    return j.dump(2);
}

std::string test_report_text(const TestReportInputs& inputs) {
    std::ostringstream out;
    out.precision(4);
    if (inputs.run_msset_test) {
        const MssetResult r = run_msset(inputs.data, inputs.options);
        out << "MSSET: statistic = " << r.statistic << ", df = " << r.df
            << ", p = " << r.p_value << "\n";
        out << "  lambda_bar = " << r.lambda_bar << ", m = " << r.m_total << ", score = (";
        for (int k = 0; k < r.score.size(); ++k)
            out << (k ? ", " : "") << r.score(k);
        out << ")\n";
    }
    if (inputs.run_egger || inputs.run_begg) {
        const UnivariateRun run = run_univariate(inputs.data, inputs);
        if (inputs.run_egger) {
            out << "Egger:";
            for (std::size_t k = 0; k < run.egger.size(); ++k)
                out << "  outcome " << (k + 1) << " p = " << run.egger[k].p_value;
            out << "  | Bonferroni p = " << run.egger_bonf.p_value << "\n";
        }
        if (inputs.run_begg) {
            out << "Begg: ";
            for (std::size_t k = 0; k < run.begg.size(); ++k)
                out << "  outcome " << (k + 1) << " p = " << run.begg[k].p_value;
            out << "  | Bonferroni p = " << run.begg_bonf.p_value << "\n";
        }
    }
    return out.str();
}

}  // namespace msset
