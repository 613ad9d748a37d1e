// Command-line front end: dataset generation, training, evaluation,
// image distortion, and report merging.

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>

#include "tamperlab/trainer.hpp"

namespace fs = std::filesystem;
using namespace tlab;

namespace {

int cmd_gen(std::size_t n, const std::vector<double>& mix, std::uint64_t seed,
            const std::string& out, std::size_t size) {
    Vocabulary vocab = Vocabulary::standard();
    GenConfig cfg;
    cfg.height = cfg.width = size;
    DatasetMix m;
    m.splice = mix[0];
    m.copy_move = mix[1];
    m.remove = mix[2];
    m.authentic = mix[3];
    auto manifest = build_dataset(n, m, seed, out, cfg, vocab);
    vocab.save(out + "/vocab.txt");
    std::cout << "wrote " << manifest.records.size() << " samples to " << out
              << " (config hash " << std::hex << manifest.config_hash << std::dec << ")\n";
    return 0;
}

int cmd_train(const std::string& config_path, const std::string& data,
              const std::string& out) {
    TrainConfig cfg;
    if (!config_path.empty()) {
        KeyValueConfig kv = KeyValueConfig::parse_file(config_path);
        cfg = TrainConfig::from_kv(kv);
        kv.finish();
    } else {
        if (const char* env = std::getenv("FORGE_SEED")) {
            cfg.seed = std::strtoull(env, nullptr, 10);
            cfg.model.seed = cfg.seed;
        }
        cfg.validate();
    }
    fs::create_directories(out);
    {
        std::ofstream snap(out + "/config.txt", std::ios::binary);
        snap << cfg.to_kv();
    }

    Vocabulary vocab = Vocabulary::standard();
    auto manifest = load_manifest(data);
    std::cout << "loaded " << manifest.records.size() << " samples from " << data << "\n";

    SleuthModel<float> model(cfg.model);
    auto train_data = TrainData<float>::load(manifest, vocab);

    std::ofstream log(out + "/train_log.tsv", std::ios::binary);
    log << "iter\tlr\tloss_total\tloss_txt\tloss_mask\n";
    train_model(model, train_data, cfg, [&](const TrainLogEntry& e) {
        log << e.iter << "\t" << e.lr << "\t" << e.loss_total << "\t" << e.loss_txt << "\t"
            << e.loss_mask << "\n";
        if (e.iter % 50 == 0 || e.iter == cfg.total_iters) {
            std::cout << "iter " << e.iter << "/" << cfg.total_iters << " lr " << e.lr
                      << " loss " << e.loss_total << " (txt " << e.loss_txt << ", mask "
                      << e.loss_mask << ")\n";
            std::cout.flush();
        }
    });

    const std::string ck = out + "/checkpoint.tfck";
    model.save_checkpoint(ck, cfg.total_iters, Rng(cfg.seed).state());
    std::cout << "checkpoint written to " << ck << "\n";
    return 0;
}

int cmd_eval(const std::string& checkpoint, const std::string& data,
             const std::vector<std::string>& distortions, bool battery,
             const std::string& out) {
    Vocabulary vocab = Vocabulary::standard();
    auto model = SleuthModel<float>::load_checkpoint(checkpoint);
    auto manifest = load_manifest(data);

    std::vector<DistortionSpec> specs;
    if (battery) specs = standard_battery();
    for (const auto& d : distortions) specs.push_back(DistortionSpec::parse(d));
    if (specs.empty()) specs.push_back({DistortionKind::None, 0.0});

    PredictFn fn = [&](const ImageRGB& img, const ImageF&) { return model.predict(img); };
    MetricsReport report = evaluate(fn, manifest, vocab, specs);
    std::cout << format_report(report);
    if (!out.empty()) {
        if (const auto dir = fs::path(out).parent_path(); !dir.empty())
            fs::create_directories(dir);
        write_report(out, report);
        std::cout << "report written to " << out << "\n";
    }
    return 0;
}

int cmd_distort(const std::string& input, const std::string& spec_text,
                const std::string& out, std::uint64_t seed) {
    const DistortionSpec spec = DistortionSpec::parse(spec_text);
    ImageRGB img = read_ppm(input);
    ImageRGB distorted = distort_image(img, spec, seed);
    write_ppm(out, distorted);
    std::cout << "wrote " << out << " (" << distorted.w << "x" << distorted.h << ")\n";
    return 0;
}

int cmd_report(const std::vector<std::string>& inputs, const std::string& out) {
    std::ostringstream os;
    for (const auto& path : inputs) {
        MetricsReport r = read_report(path);
        os << "== " << r.dataset << " (" << path << ")\n" << format_report(r) << "\n";
    }
    std::cout << os.str();
    if (!out.empty()) {
        std::ofstream of(out, std::ios::binary);
        if (!of) throw MetricError("cannot write " + out);
        of << os.str();
        std::cout << "merged report written to " << out << "\n";
    }
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"tamperlab: image manipulation detection workbench"};
    app.require_subcommand(1);

    // gen
    auto* gen = app.add_subcommand("gen", "Generate a synthetic tamper dataset");
    std::size_t gen_n = 0;
    std::vector<double> gen_mix = {0.25, 0.25, 0.25, 0.25};
    std::uint64_t gen_seed = 0;
    std::string gen_out;
    std::size_t gen_size = 64;
    gen->add_option("-n,--count", gen_n, "number of samples")->required();
    gen->add_option("--mix", gen_mix,
                    "fractions: splice copy-move remove authentic (sum to 1)")
        ->expected(4);
    gen->add_option("--seed", gen_seed, "dataset seed")->required();
    gen->add_option("-o,--out", gen_out, "output directory")->required();
    gen->add_option("--size", gen_size, "image edge length (default 64)");

    // train
    auto* train = app.add_subcommand("train", "Train a model on a generated dataset");
    std::string train_config, train_data, train_out;
    train->add_option("--config", train_config, "key=value training config file");
    train->add_option("--data", train_data, "dataset manifest path")->required();
    train->add_option("-o,--out", train_out, "run directory")->required();

    // eval
    auto* ev = app.add_subcommand("eval", "Evaluate a checkpoint on a dataset");
    std::string eval_ck, eval_data, eval_out;
    std::vector<std::string> eval_dist;
    bool eval_battery = false;
    ev->add_option("--checkpoint", eval_ck, "checkpoint file")->required();
    ev->add_option("--data", eval_data, "dataset manifest path")->required();
    ev->add_option("--distort", eval_dist,
                   "distortion specs (none, resize:S, blur:K, noise:SIGMA, jpeg:Q)");
    ev->add_flag("--battery", eval_battery, "run the standard 9-setting battery");
    ev->add_option("-o,--out", eval_out, "report output path");

    // distort
    auto* dis = app.add_subcommand("distort", "Apply a distortion to a PPM image");
    std::string dis_in, dis_spec, dis_out;
    std::uint64_t dis_seed = 0;
    dis->add_option("--image", dis_in, "input PPM")->required();
    dis->add_option("--spec", dis_spec, "distortion spec, e.g. jpeg:50")->required();
    dis->add_option("-o,--out", dis_out, "output PPM")->required();
    dis->add_option("--seed", dis_seed, "noise seed (default 0)");

    // report
    auto* rep = app.add_subcommand("report", "Merge evaluation reports");
    std::vector<std::string> rep_in;
    std::string rep_out;
    rep->add_option("inputs", rep_in, "report files")->required();
    rep->add_option("-o,--out", rep_out, "merged output path");

    CLI11_PARSE(app, argc, argv);

    try {
        if (*gen) {
            double sum = 0;
            for (double f : gen_mix) sum += f;
            if (std::abs(sum - 1.0) > 1e-9) {
                std::cerr << "error: --mix fractions sum to " << sum << ", expected 1\n";
                return 2;
            }
            return cmd_gen(gen_n, gen_mix, gen_seed, gen_out, gen_size);
        }
        if (*train) return cmd_train(train_config, train_data, train_out);
        if (*ev) return cmd_eval(eval_ck, eval_data, eval_dist, eval_battery, eval_out);
        if (*dis) return cmd_distort(dis_in, dis_spec, dis_out, dis_seed);
        if (*rep) return cmd_report(rep_in, rep_out);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
