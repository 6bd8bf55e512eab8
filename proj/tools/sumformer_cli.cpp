#include <CLI11.hpp>

#include <fstream>
#include <iostream>

#include "sumformer/train.hpp"

namespace sf = sumformer;

namespace {

sf::SplitSpec parse_split(const std::string& s, int min_segment_len) {
    sf::SplitSpec spec;
    spec.min_segment_len = min_segment_len;
    int a = 0, b = 0, c = 0;
    char c1 = 0, c2 = 0;
    std::istringstream is(s);
    if (!(is >> a >> c1 >> b >> c2 >> c) || c1 != ':' || c2 != ':')
        throw std::runtime_error("split must look like 7:1:2, got '" + s + "'");
    spec.train_tenths = a;
    spec.val_tenths = b;
    spec.test_tenths = c;
    return spec;
}

std::vector<int> parse_int_list(const std::string& s) {
    std::vector<int> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ',')) out.push_back(std::stoi(item));
    if (out.empty()) throw std::runtime_error("expected a comma-separated integer list, got '" + s + "'");
    return out;
}

std::array<int, 4> parse_dims(const std::string& s) {
    auto v = parse_int_list(s);
    if (v.size() != 4) throw std::runtime_error("dims must be T,C,H,W, got '" + s + "'");
    return {v[0], v[1], v[2], v[3]};
}

std::ostream& open_out(std::ofstream& file, const std::string& path) {
    if (path.empty()) return std::cout;
    file.open(path);
    if (!file) throw std::runtime_error("cannot open '" + path + "' for writing");
    return file;
}

void cmd_train(const std::string& config_path, const std::string& out_dir) {
    sf::TrainConfig tc;
    sf::ModelConfig mc;
    sf::apply_config(sf::parse_kv_file(config_path), tc, mc);
    if (tc.dataset.empty()) throw std::runtime_error("config is missing 'dataset'");
    sf::GridSeries<float> data = sf::read_grid_series<float>(tc.dataset);
    mc.C = data.C();
    mc.H = data.H();
    mc.W = data.W();
    sf::SplitSpec split_spec;
    split_spec.min_segment_len = tc.T_in + tc.horizon;
    bool tube = mc.variant.tube && mc.L_spatial > 1;
    sf::PreparedData<float> prepared = sf::prepare_data(data, split_spec, tube);
    sf::TrainResult result = sf::train(tc, mc, prepared, out_dir);

    std::ofstream log(out_dir + "/epochs.csv");
    sf::write_epoch_log(log, result);
    std::ofstream metrics(out_dir + "/metrics.csv");
    sf::write_report_header(metrics);
    sf::write_report_row(metrics, {result.variant, result.scenario, result.test_at_best.mae,
                                   result.test_at_best.rmse});
    sf::write_report_row(metrics, {result.variant + "-final-epoch", result.scenario, result.test_at_final.mae,
                                   result.test_at_final.rmse});

    std::cout << "best epoch " << result.best_epoch << " (val mse " << result.best_val << ")\n";
    std::cout << "test at best checkpoint: mae " << result.test_at_best.mae << " rmse " << result.test_at_best.rmse
              << "\n";
    std::cout << "test at final epoch:     mae " << result.test_at_final.mae << " rmse "
              << result.test_at_final.rmse << "\n";
    std::cout << "checkpoint: " << result.best_checkpoint << "\n";
}

void cmd_eval(const std::string& checkpoint, const std::string& data_path, const std::string& scenario,
              const std::string& split_str, const std::string& out_path) {
    sf::ModelParams<float> model = sf::load_checkpoint<float>(checkpoint);
    auto [t_in, tau] = sf::parse_scenario(scenario);
    if (t_in != model.cfg.input_len || tau != model.cfg.horizon)
        throw std::runtime_error("scenario " + scenario + " does not match checkpoint (" +
                                 std::to_string(model.cfg.input_len) + "-" + std::to_string(model.cfg.horizon) + ")");
    sf::GridSeries<float> data = sf::read_grid_series<float>(data_path);
    if (data.C() != model.cfg.C || data.H() != model.cfg.H || data.W() != model.cfg.W)
        throw std::runtime_error("dataset grid does not match checkpoint grid");
    sf::PreparedData<float> prepared =
        sf::prepare_data(data, parse_split(split_str, t_in + tau), model.uses_tube());
    sf::EvalMetrics m = sf::evaluate_any(model, prepared, 2, tau);
    std::ofstream file;
    std::ostream& os = open_out(file, out_path);
    sf::write_report_header(os);
    sf::write_report_row(os, {model.cfg.variant.name, scenario, m.mae, m.rmse});
}

void cmd_synth(const std::string& out, const std::string& dims, int steps_per_day, double noise,
               std::uint64_t seed) {
    auto [T, C, H, W] = parse_dims(dims);
    sf::GridSeries<float> g = sf::synth_generate<float>(T, C, H, W, steps_per_day, noise, seed);
    sf::write_grid_series(out, g);
    std::cout << "wrote " << out << " with dims " << T << "," << C << "," << H << "," << W << "\n";
}

void cmd_convert(const std::string& raw_path, const std::string& dims, int steps_per_day,
                 const std::string& out) {
    auto [T, C, H, W] = parse_dims(dims);
    const std::int64_t count = static_cast<std::int64_t>(T) * C * H * W;
    std::ifstream is(raw_path, std::ios::binary);
    if (!is) throw std::runtime_error("cannot open '" + raw_path + "'");
    is.seekg(0, std::ios::end);
    const std::int64_t bytes = static_cast<std::int64_t>(is.tellg());
    if (bytes != 4 * count)
        throw std::runtime_error("raw payload has " + std::to_string(bytes) + " bytes, dims imply " +
                                 std::to_string(4 * count));
    is.seekg(0, std::ios::beg);
    sf::Tensor<float> values(sf::Shape{T, C, H, W});
    for (std::int64_t i = 0; i < count; ++i) values[i] = sf::detail::get_f32(is);
    sf::write_grid_series(out, sf::GridSeries<float>(std::move(values), steps_per_day));
    std::cout << "wrote " << out << "\n";
}

void cmd_bench(const std::string& mechanisms, const std::string& g_sizes, int dict_g, int d_model, int heads,
               int repeats, const std::string& out_path) {
    std::vector<sf::IssbKind> kinds;
    std::stringstream ss(mechanisms);
    std::string item;
    while (std::getline(ss, item, ',')) kinds.push_back(sf::issb_kind_from(item));
    std::vector<sf::BenchRow> rows =
        sf::bench_issb<float>(kinds, parse_int_list(g_sizes), dict_g, d_model, heads, repeats);
    std::ofstream file;
    std::ostream& os = open_out(file, out_path);
    sf::write_bench_header(os);
    for (const auto& r : rows) sf::write_bench_row(os, r);
}

void cmd_baseline(const std::string& method, const std::string& data_path, const std::string& scenario,
                  const std::string& split_str, const std::string& out_path, int epochs, double lr,
                  std::uint64_t seed) {
    auto [t_in, tau] = sf::parse_scenario(scenario);
    sf::GridSeries<float> data = sf::read_grid_series<float>(data_path);
    sf::SplitSpec split_spec = parse_split(split_str, t_in + tau);
    sf::Splits<float> sp = sf::split(data, split_spec);
    sf::Tensor<float> full_raw = sf::flatten_video(data).values;
    sf::Tensor<float> test_raw = sf::flatten_video(sp.test).values;

    std::vector<int> starts = sf::window_starts(sp.test.T(), t_in, tau, tau);
    sf::MetricAccumulator acc;

    if (method == "ha") {
        for (int s : starts) {
            sf::Tensor<float> input = sf::copy_window(test_raw, s, t_in);
            acc.add(sf::ha_forecast(input, tau), sf::copy_window(test_raw, s + t_in, tau));
        }
    } else if (method == "dh" || method == "wh") {
        const int period = method == "dh" ? data.steps_per_day : data.steps_per_week;
        for (int s : starts) {
            const int origin = sp.test_offset + s + t_in;
            acc.add(sf::periodic_forecast(full_raw, origin, tau, period),
                    sf::copy_window(test_raw, s + t_in, tau));
        }
    } else if (method == "nlinear") {
        sf::NormStats stats = sf::compute_norm_stats(sp.train.values);
        sf::Tensor<float> train_norm = sf::normalize(sf::flatten_video(sp.train).values, stats);
        sf::Tensor<float> test_norm = sf::normalize(test_raw, stats);
        sf::NlinearFitConfig fit;
        fit.epochs = epochs;
        fit.lr = lr;
        fit.seed = seed;
        sf::NlinearModel<float> model = sf::nlinear_fit(train_norm, t_in, tau, fit);
        for (int s : starts) {
            sf::Tensor<float> pred = sf::nlinear_forecast(model, sf::copy_window(test_norm, s, t_in));
            acc.add(sf::denormalize(pred, stats), sf::copy_window(test_raw, s + t_in, tau));
        }
    } else {
        throw std::runtime_error("unknown baseline method '" + method + "' (ha|dh|wh|nlinear)");
    }

    std::ofstream file;
    std::ostream& os = open_out(file, out_path);
    sf::write_report_header(os);
    sf::write_report_row(os, {method, scenario, acc.mae(), acc.rmse()});
}

void cmd_export_attention(const std::string& checkpoint, const std::string& data_path, int variable, int layer,
                          int patch, int window_start, const std::string& split_str, const std::string& out_path) {
    sf::ModelParams<float> model = sf::load_checkpoint<float>(checkpoint);
    sf::GridSeries<float> data = sf::read_grid_series<float>(data_path);
    const int t_in = model.cfg.input_len;
    sf::SplitSpec split_spec = parse_split(split_str, t_in + model.cfg.horizon);
    sf::PreparedData<float> prepared = sf::prepare_data(data, split_spec, false);
    if (window_start + t_in > prepared.test_norm.shape[1])
        throw std::runtime_error("window start " + std::to_string(window_start) + " leaves no full input window");
    sf::Tensor<float> window = sf::copy_window(prepared.test_norm, window_start, t_in);
    sf::Tensor<float> row = sf::export_attention(model, window, variable, layer, patch);
    std::ofstream file;
    std::ostream& os = open_out(file, out_path);
    os << "row_variable,col_variable,score\n";
    for (int k = 0; k < row.shape[0]; ++k) os << variable << "," << k << "," << row(k) << "\n";
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"super-multivariate grid mobility forecasting"};
    app.require_subcommand(1);

    auto* t = app.add_subcommand("train", "train a model from a key = value config file");
    std::string config_path, out_dir = "run";
    t->add_option("--config", config_path, "config file")->required();
    t->add_option("--out-dir", out_dir, "output directory for checkpoints and logs");

    auto* e = app.add_subcommand("eval", "evaluate a checkpoint on the test split");
    std::string ckpt, data_path, scenario = "128-128", split_str = "7:1:2", out_path;
    e->add_option("--checkpoint", ckpt, "checkpoint path")->required();
    e->add_option("--data", data_path, "grid series file")->required();
    e->add_option("--scenario", scenario, "Tin-tau, must match the checkpoint");
    e->add_option("--split", split_str, "train:val:test tenths");
    e->add_option("--out", out_path, "metrics CSV path (default stdout)");

    auto* s = app.add_subcommand("synth", "generate a synthetic periodic grid series");
    std::string synth_out, dims = "2000,2,8,8";
    int steps_per_day = 48;
    double noise = 0.0;
    std::uint64_t seed = 0;
    s->add_option("--out", synth_out, "output file")->required();
    s->add_option("--dims", dims, "T,C,H,W");
    s->add_option("--steps-per-day", steps_per_day, "time steps per day");
    s->add_option("--noise", noise, "gaussian noise sigma");
    s->add_option("--seed", seed, "rng seed");

    auto* c = app.add_subcommand("convert", "convert a raw float32 dump to the grid series format");
    std::string raw_path, conv_out, conv_dims;
    int conv_spd = 48;
    c->add_option("--raw", raw_path, "raw float32 payload, t-major then (c,h,w)")->required();
    c->add_option("--dims", conv_dims, "T,C,H,W")->required();
    c->add_option("--steps-per-day", conv_spd, "time steps per day")->required();
    c->add_option("--out", conv_out, "output file")->required();

    auto* b = app.add_subcommand("bench", "attention-scaling microbenchmark of the inter-series mechanisms");
    std::string mechanisms = "full,dictionary,lowrank,additive", g_sizes = "512,1024,2048", bench_out;
    int dict_g = 256, d_model = 128, heads = 1, repeats = 5;
    b->add_option("--mechanisms", mechanisms, "comma-separated mechanism list");
    b->add_option("--g-sizes", g_sizes, "ascending variable counts");
    b->add_option("--g-dict", dict_g, "dictionary / low-rank width");
    b->add_option("--d-model", d_model, "token width");
    b->add_option("--heads", heads, "attention heads");
    b->add_option("--repeats", repeats, "timed repeats per point");
    b->add_option("--out", bench_out, "CSV path (default stdout)");

    auto* bl = app.add_subcommand("baseline", "run a heuristic or Nlinear baseline on the test split");
    std::string method, bl_data, bl_scenario = "128-128", bl_split = "7:1:2", bl_out;
    int bl_epochs = 20;
    double bl_lr = 1e-3;
    std::uint64_t bl_seed = 0;
    bl->add_option("--method", method, "ha|dh|wh|nlinear")->required();
    bl->add_option("--data", bl_data, "grid series file")->required();
    bl->add_option("--scenario", bl_scenario, "Tin-tau");
    bl->add_option("--split", bl_split, "train:val:test tenths");
    bl->add_option("--out", bl_out, "metrics CSV path (default stdout)");
    bl->add_option("--epochs", bl_epochs, "nlinear fit epochs");
    bl->add_option("--lr", bl_lr, "nlinear fit learning rate");
    bl->add_option("--seed", bl_seed, "nlinear fit seed");

    auto* x = app.add_subcommand("export-attention", "write one full-attention score row as CSV");
    std::string x_ckpt, x_data, x_split = "7:1:2", x_out;
    int x_var = 0, x_layer = 0, x_patch = 0, x_start = 0;
    x->add_option("--checkpoint", x_ckpt, "checkpoint path (full-attention variant)")->required();
    x->add_option("--data", x_data, "grid series file")->required();
    x->add_option("--variable", x_var, "query variable index")->required();
    x->add_option("--layer", x_layer, "block index");
    x->add_option("--patch", x_patch, "patch index within the block");
    x->add_option("--window-start", x_start, "window start inside the test segment");
    x->add_option("--split", x_split, "train:val:test tenths");
    x->add_option("--out", x_out, "CSV path (default stdout)");

    CLI11_PARSE(app, argc, argv);

    try {
        if (t->parsed()) cmd_train(config_path, out_dir);
        if (e->parsed()) cmd_eval(ckpt, data_path, scenario, split_str, out_path);
        if (s->parsed()) cmd_synth(synth_out, dims, steps_per_day, noise, seed);
        if (c->parsed()) cmd_convert(raw_path, conv_dims, conv_spd, conv_out);
        if (b->parsed()) cmd_bench(mechanisms, g_sizes, dict_g, d_model, heads, repeats, bench_out);
        if (bl->parsed()) cmd_baseline(method, bl_data, bl_scenario, bl_split, bl_out, bl_epochs, bl_lr, bl_seed);
        if (x->parsed())
            cmd_export_attention(x_ckpt, x_data, x_var, x_layer, x_patch, x_start, x_split, x_out);
    } catch (const std::exception& ex) {
        std::cerr << "error: " << ex.what() << "\n";
        return 1;
    }
    return 0;
}
