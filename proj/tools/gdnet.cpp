// Command-line front end: dataset synthesis, degradation, training,
// evaluation, inference, ablation sweeps and gradient checking.
//
// Every subcommand accepts --config <json> plus flag overrides; flags win.
// Exit codes: 0 success, 2 usage/configuration error.

#include <iostream>

#include <CLI11.hpp>

#include "gdnet/gradcheck.hpp"
#include "gdnet/train.hpp"

using namespace gdnet;

namespace {

nlohmann::json load_config(const std::string& path) {
  if (path.empty()) return nlohmann::json::object();
  std::ifstream in(path);
  if (!in) fail("config", "cannot open " + path);
  return nlohmann::json::parse(in);
}

struct ModelFlags {
  std::string config_path;
  std::vector<std::size_t> image_channels;
  long depth_channels = -1, heads = -1, lowrank_dim = -1, bins = -1;
  int n_sa = -1, n_ca = -1, neumann_terms = -1;
  std::string inverse_mode;
  double d_min = -1, d_max = -1;

  void attach(CLI::App* app) {
    app->add_option("--config", config_path, "JSON config file");
    app->add_option("--image-channels", image_channels,
                    "channel widths per pyramid scale");
    app->add_option("--depth-channels", depth_channels);
    app->add_option("--heads", heads);
    app->add_option("--lowrank-dim", lowrank_dim);
    app->add_option("--bins", bins);
    app->add_option("--n-sa", n_sa);
    app->add_option("--n-ca", n_ca);
    app->add_option("--neumann-terms", neumann_terms);
    app->add_option("--inverse-mode", inverse_mode)
        ->check(CLI::IsMember({"neumann", "exact"}));
    app->add_option("--d-min", d_min);
    app->add_option("--d-max", d_max);
  }

  ModelConfig resolve() const {
    ModelConfig c = ModelConfig::from_json(load_config(config_path));
    if (!image_channels.empty()) c.image_channels = image_channels;
    if (depth_channels >= 0) c.depth_channels = std::size_t(depth_channels);
    if (heads >= 0) c.heads = std::size_t(heads);
    if (lowrank_dim >= 0) c.lowrank_dim = std::size_t(lowrank_dim);
    if (bins >= 0) c.bins = std::size_t(bins);
    if (n_sa >= 0) c.n_sa = n_sa;
    if (n_ca >= 0) c.n_ca = n_ca;
    if (neumann_terms >= 0) c.neumann_terms = neumann_terms;
    if (!inverse_mode.empty())
      c.inverse_mode =
          inverse_mode == "exact" ? InverseMode::exact_solve : InverseMode::neumann;
    if (d_min >= 0) c.d_min = float(d_min);
    if (d_max >= 0) c.d_max = float(d_max);
    c.validate();
    return c;
  }
};

struct TrainFlags {
  int epochs = -1, batch = -1, crop = -1;
  double lr_start = -1, lr_end = -1, lambda = -1, alpha = -1;
  long seed = -1;
  std::string loss;
  int flips = -1;

  void attach(CLI::App* app) {
    app->add_option("--epochs", epochs);
    app->add_option("--batch", batch);
    app->add_option("--crop", crop);
    app->add_option("--lr-start", lr_start);
    app->add_option("--lr-end", lr_end);
    app->add_option("--lambda", lambda);
    app->add_option("--alpha", alpha);
    app->add_option("--seed", seed);
    app->add_option("--loss", loss)->check(CLI::IsMember({"silog", "l1", "mse"}));
    app->add_option("--flips", flips, "1 = flip augmentation on, 0 = off");
  }

  TrainConfig resolve(const nlohmann::json& j) const {
    TrainConfig c = TrainConfig::from_json(j);
    if (epochs >= 0) c.epochs = epochs;
    if (batch >= 0) c.batch = batch;
    if (crop >= 0) c.crop = crop;
    if (lr_start >= 0) c.lr_start = lr_start;
    if (lr_end >= 0) c.lr_end = lr_end;
    if (lambda >= 0) c.loss_cfg.lambda = lambda;
    if (alpha >= 0) c.loss_cfg.alpha = alpha;
    if (seed >= 0) c.seed = std::uint64_t(seed);
    if (!loss.empty()) c.loss = loss;
    if (flips >= 0) c.flip_horizontal = c.flip_vertical = (flips != 0);
    c.validate();
    return c;
  }
};

int run(int argc, char** argv) {
  CLI::App app{"guided depth super-resolution toolkit"};
  app.require_subcommand(1);

  // synth-data
  auto* synth = app.add_subcommand("synth-data", "generate a synthetic dataset");
  std::string synth_out;
  int synth_count = 16, synth_w = 64, synth_h = 64;
  std::uint64_t synth_seed = 0;
  int synth_scale = 4, synth_bits = 8;
  double synth_sigma = 0.01;
  synth->add_option("--out", synth_out)->required();
  synth->add_option("--count", synth_count);
  synth->add_option("--width", synth_w);
  synth->add_option("--height", synth_h);
  synth->add_option("--seed", synth_seed);
  synth->add_option("--scale", synth_scale);
  synth->add_option("--bits", synth_bits);
  synth->add_option("--noise-sigma", synth_sigma, "as a fraction of depth range");

  // degrade
  auto* deg = app.add_subcommand("degrade", "degrade a ground-truth PFM depth map");
  std::string deg_in, deg_out;
  int deg_scale = 4, deg_bits = 8;
  double deg_sigma = 0.01, deg_dmin = 0.1, deg_dmax = 10.0;
  std::uint64_t deg_seed = 0;
  deg->add_option("--in", deg_in)->required();
  deg->add_option("--out", deg_out, "output 16-bit PGM path")->required();
  deg->add_option("--scale", deg_scale);
  deg->add_option("--bits", deg_bits);
  deg->add_option("--noise-sigma", deg_sigma, "in meters");
  deg->add_option("--seed", deg_seed);
  deg->add_option("--d-min", deg_dmin);
  deg->add_option("--d-max", deg_dmax);

  // train
  auto* tr = app.add_subcommand("train", "train a model");
  std::string tr_data, tr_out;
  ModelFlags tr_mf;
  TrainFlags tr_tf;
  tr->add_option("--data", tr_data)->required();
  tr->add_option("--out", tr_out)->required();
  tr_mf.attach(tr);
  tr_tf.attach(tr);

  // eval
  auto* ev = app.add_subcommand("eval", "evaluate a checkpoint (and the bicubic baseline)");
  std::string ev_data, ev_ckpt, ev_out, ev_run_id = "run", ev_split = "test";
  bool ev_maps = false;
  ev->add_option("--data", ev_data)->required();
  ev->add_option("--checkpoint", ev_ckpt)->required();
  ev->add_option("--out", ev_out)->required();
  ev->add_option("--run-id", ev_run_id);
  ev->add_option("--split", ev_split);
  ev->add_flag("--error-maps", ev_maps, "write normalized 8-bit error maps");

  // infer
  auto* inf = app.add_subcommand("infer", "super-resolve one degraded depth map");
  std::string inf_ckpt, inf_rgb, inf_lq, inf_meta, inf_out;
  inf->add_option("--checkpoint", inf_ckpt)->required();
  inf->add_option("--rgb", inf_rgb)->required();
  inf->add_option("--lq", inf_lq, "16-bit PGM of the degraded map")->required();
  inf->add_option("--meta", inf_meta, "sidecar JSON")->required();
  inf->add_option("--out", inf_out, "output PFM path")->required();

  // ablate
  auto* ab = app.add_subcommand("ablate", "train and evaluate ablation variants");
  std::string ab_train, ab_test, ab_out;
  std::vector<std::string> ab_axes{"FGDE", "LFR"};
  ModelFlags ab_mf;
  TrainFlags ab_tf;
  ab->add_option("--train-data", ab_train)->required();
  ab->add_option("--test-data", ab_test)->required();
  ab->add_option("--out", ab_out)->required();
  ab->add_option("--axes", ab_axes, "subset of FGDE DCPM GGE LFR loss N_SA N_CA");
  ab_mf.attach(ab);
  ab_tf.attach(ab);

  // gradcheck
  auto* gc = app.add_subcommand("gradcheck", "finite-difference check of a full forward pass");
  std::uint64_t gc_seed = 0;
  gc->add_option("--seed", gc_seed);

  CLI11_PARSE(app, argc, argv);
  tune_allocator();

  if (*synth) {
    SceneSpec ss;
    ss.width = std::size_t(synth_w);
    ss.height = std::size_t(synth_h);
    DegradationSpec dg;
    dg.scale = synth_scale;
    dg.bits = synth_bits;
    dg.noise_sigma = float(synth_sigma) * (ss.d_max - ss.d_min);
    synthesize_dataset(synth_out, synth_seed, synth_count, ss, dg);
    std::cout << "wrote " << synth_count << " samples to " << synth_out << "\n";
  } else if (*deg) {
    DepthMap gt = read_pfm(deg_in);
    gt.d_min = float(deg_dmin);
    gt.d_max = float(deg_dmax);
    DegradationSpec dg;
    dg.scale = deg_scale;
    dg.bits = deg_bits;
    dg.noise_sigma = float(deg_sigma);
    dg.seed = deg_seed;
    DepthMap lq = degrade(gt, dg);
    write_pgm16(deg_out, quantize_depth(lq, 16));
    write_sidecar(deg_out + ".meta.json", sidecar_json(gt, dg));
    std::cout << "wrote " << deg_out << " (" << lq.width << "x" << lq.height << ")\n";
  } else if (*tr) {
    ModelConfig mc = tr_mf.resolve();
    TrainConfig tc = tr_tf.resolve(load_config(tr_mf.config_path));
    RunRecord rec = train(tr_data, mc, tc, tr_out, &std::cout);
    std::vector<Sample> data = load_dataset(tr_data);
    GDNet<float> model = GDNet<float>::load(rec.checkpoint_path);
    EvalResult res = evaluate_model(data, model);
    rec.final_mae = res.aggregate.mae;
    rec.final_rmse = res.aggregate.rmse;
    rec.final_silog = res.aggregate.silog;
    std::ofstream rr(std::filesystem::path(tr_out) / "run_record.json");
    rr << rec.to_json().dump(2) << "\n";
    std::cout << "train MAE " << rec.final_mae << " RMSE " << rec.final_rmse
              << " (wall " << rec.wall_seconds << " s)\n";
  } else if (*ev) {
    std::vector<Sample> data = load_dataset(ev_data);
    GDNet<float> model = GDNet<float>::load(ev_ckpt);
    std::filesystem::create_directories(ev_out);
    EvalResult res = evaluate_model(
        data, model,
        ev_maps ? std::filesystem::path(ev_out) / "error_maps" : std::filesystem::path());
    write_metrics_csv(std::filesystem::path(ev_out) / "metrics.csv", ev_run_id, ev_split,
                      res);
    EvalResult bic = evaluate_bicubic(data);
    write_metrics_csv(std::filesystem::path(ev_out) / "metrics_bicubic.csv", "bicubic",
                      ev_split, bic);
    std::cout << "model   MAE " << res.aggregate.mae << " RMSE " << res.aggregate.rmse
              << " SILog " << res.aggregate.silog << "\n"
              << "bicubic MAE " << bic.aggregate.mae << " RMSE " << bic.aggregate.rmse
              << " SILog " << bic.aggregate.silog << "\n";
  } else if (*inf) {
    GDNet<float> model = GDNet<float>::load(inf_ckpt);
    RgbImage rgb = read_ppm(inf_rgb);
    nlohmann::json meta = read_sidecar(inf_meta);
    QuantizedDepth q = read_pgm16(inf_lq);
    q.d_min = meta.at("d_min").get<float>();
    q.d_max = meta.at("d_max").get<float>();
    q.bits = 16;
    DepthMap lq = dequantize_depth(q);
    Tensor<float> pred =
        model.forward(rgb_to_tensor<float>(rgb), depth_to_tensor<float>(lq));
    write_pfm(inf_out, tensor_to_depth(pred, q.d_min, q.d_max));
    std::cout << "wrote " << inf_out << "\n";
  } else if (*ab) {
    ModelConfig mc = ab_mf.resolve();
    TrainConfig tc = ab_tf.resolve(load_config(ab_mf.config_path));
    std::filesystem::create_directories(ab_out);
    ablate(ab_train, ab_test, ab_axes, mc, tc, ab_out, &std::cout);
    std::cout << "wrote " << (std::filesystem::path(ab_out) / "ablation.csv").string()
              << "\n";
  } else if (*gc) {
    ModelConfig mc;
    mc.image_channels = {4, 8};
    mc.depth_channels = 4;
    mc.heads = 2;
    mc.lowrank_dim = 2;
    mc.bins = 4;
    GDNet<double> model(mc, gc_seed);
    std::mt19937_64 rng(derive_seed(gc_seed, rng_tag::noise, 0));
    std::uniform_real_distribution<double> u(0.0, 1.0);
    const std::size_t H = 8, W = 8, h = 2, w = 2;
    std::vector<double> rgb(3 * H * W), lq(h * w);
    for (auto& v : rgb) v = u(rng);
    for (auto& v : lq) v = mc.d_min + (mc.d_max - mc.d_min) * u(rng);
    auto rgb_t = Tensor<double>::from_data({3, H, W}, std::move(rgb), true);
    auto lq_t = Tensor<double>::from_data({1, h, w}, std::move(lq), true);
    GradcheckReport rep = gradcheck(
        [&](const std::vector<Tensor<double>>& in) {
          return mean(model.forward(in[0], in[1]));
        },
        {rgb_t, lq_t});
    std::cout << "gradcheck max relative error " << rep.max_rel_err
              << (rep.pass ? " PASS" : " FAIL") << "\n";
    return rep.pass ? 0 : 2;
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run(argc, argv);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
}
