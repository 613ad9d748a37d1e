#include "tamperlab/eval.hpp"

#include <fstream>
#include <iomanip>
#include <sstream>

#include "tamperlab/rng.hpp"

namespace tlab {

Prediction oracle_predict(const ImageRGB&, const ImageF& gt) {
    return {gt, [&] {
                for (float v : gt.data)
                    if (v != 0.0f) return true;
                return false;
            }()};
}

Prediction anti_oracle_predict(const ImageRGB&, const ImageF& gt) {
    ImageF inv(gt.h, gt.w);
    bool fake = false;
    for (std::size_t i = 0; i < gt.data.size(); ++i) {
        inv.data[i] = 1.0f - gt.data[i];
        if (gt.data[i] != 0.0f) fake = true;
    }
    return {inv, !fake};
}

Prediction constant_predict(const ImageRGB& img, const ImageF&) {
    return {ImageF(img.h, img.w, 0.5f), true};
}

const DistortionMetrics& MetricsReport::row(const std::string& spec) const {
    for (const auto& r : rows)
        if (r.spec == spec) return r;
    throw MetricError("report has no row for distortion '" + spec + "'");
}

MetricsReport evaluate(const PredictFn& model, const DatasetManifest& manifest,
                       const Vocabulary& vocab, const std::vector<DistortionSpec>& specs,
                       double fixed_threshold) {
    MetricsReport report;
    report.dataset = manifest.dir;
    for (const auto& spec : specs) {
        spec.validate();
        DistortionMetrics m;
        m.label = spec.label();
        m.spec = spec.spec_string();
        double f1f = 0, f1o = 0, auc = 0;
        std::size_t auc_n = 0, loc_n = 0, fake_hits = 0;
        for (std::size_t i = 0; i < manifest.records.size(); ++i) {
            LoadedSample s = load_sample(manifest, i, vocab);
            // per-image noise seed derived from the sample for reproducibility
            const std::uint64_t seed = derive_seed(manifest.records[i].seed, 0xD157);
            DistortedPair d = distort(s.image, s.mask, spec, seed);
            Prediction pred = model(d.image, d.mask);
            if (pred.prob.h != d.image.h || pred.prob.w != d.image.w)
                throw MetricError("predictor returned mask of wrong shape");
            f1f += f1_at(pred.prob, d.mask, fixed_threshold);
            f1o += f1_optimal(pred.prob, d.mask);
            ++loc_n;
            if (auto a = pixel_auc(pred.prob, d.mask)) {
                auc += *a;
                ++auc_n;
            }
            if (s.fake) {
                ++m.n_fake;
                if (pred.says_fake) ++fake_hits;
            }
        }
        m.n_images = manifest.records.size();
        m.n_auc_excluded = m.n_images - auc_n;
        m.f1_fixed = loc_n ? f1f / double(loc_n) : 0.0;
        m.f1_optimal = loc_n ? f1o / double(loc_n) : 0.0;
        m.auc = auc_n ? auc / double(auc_n) : 0.0;
        m.recall_fake = m.n_fake ? double(fake_hits) / double(m.n_fake) : 0.0;
        report.rows.push_back(m);
    }
    return report;
}

std::string format_report(const MetricsReport& report) {
    std::ostringstream os;
    os << "#tamperlab-report v1\n";
    os << "dataset=" << report.dataset << "\n";
    for (const auto& r : report.rows) {
        os << "row\tspec=" << r.spec << "\tlabel=" << r.label << std::setprecision(10)
           << "\tf1_fixed=" << r.f1_fixed << "\tf1_optimal=" << r.f1_optimal
           << "\tauc=" << r.auc << "\trecall_fake=" << r.recall_fake
           << "\tn_images=" << r.n_images << "\tn_fake=" << r.n_fake
           << "\tn_auc_excluded=" << r.n_auc_excluded << "\n";
    }
    // human-readable table in the robustness-table layout
    os << "\n";
    os << std::left << std::setw(20) << "Distortion" << std::right << std::setw(10)
       << "F1(fix)" << std::setw(10) << "F1(opt)" << std::setw(10) << "AUC"
       << std::setw(10) << "Recall" << "\n";
    os << std::setprecision(4) << std::fixed;
    for (const auto& r : report.rows)
        os << std::left << std::setw(20) << r.label << std::right << std::setw(10)
           << r.f1_fixed << std::setw(10) << r.f1_optimal << std::setw(10) << r.auc
           << std::setw(10) << r.recall_fake << "\n";
    return os.str();
}

void write_report(const std::string& path, const MetricsReport& report) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw MetricError("cannot write report " + path);
    os << format_report(report);
}

MetricsReport read_report(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw MetricError("cannot read report " + path);
    MetricsReport report;
    std::string line;
    bool magic = false;
    while (std::getline(is, line)) {
        if (line.rfind("#tamperlab-report", 0) == 0) {
            magic = true;
            continue;
        }
        if (line.rfind("dataset=", 0) == 0) {
            report.dataset = line.substr(8);
            continue;
        }
        if (line.rfind("row\t", 0) != 0) continue;
        DistortionMetrics m;
        std::istringstream ls(line.substr(4));
        std::string field;
        while (std::getline(ls, field, '\t')) {
            const auto eq = field.find('=');
            if (eq == std::string::npos) continue;
            const std::string key = field.substr(0, eq);
            const std::string val = field.substr(eq + 1);
            if (key == "spec") m.spec = val;
            else if (key == "label") m.label = val;
            else if (key == "f1_fixed") m.f1_fixed = std::stod(val);
            else if (key == "f1_optimal") m.f1_optimal = std::stod(val);
            else if (key == "auc") m.auc = std::stod(val);
            else if (key == "recall_fake") m.recall_fake = std::stod(val);
            else if (key == "n_images") m.n_images = std::stoul(val);
            else if (key == "n_fake") m.n_fake = std::stoul(val);
            else if (key == "n_auc_excluded") m.n_auc_excluded = std::stoul(val);
        }
        report.rows.push_back(m);
    }
    if (!magic) throw MetricError("not a report file: " + path);
    return report;
}

} // namespace tlab
