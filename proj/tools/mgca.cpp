#include <algorithm>
#include <cstdio>
#include <exception>
#include <iostream>
#include <set>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "mgca/c2f.hpp"
#include "mgca/data.hpp"
#include "mgca/errors.hpp"
#include "mgca/evaluation.hpp"
#include "mgca/io.hpp"
#include "mgca/net.hpp"
#include "mgca/pipeline.hpp"
#include "mgca/synth.hpp"

// Command-line front end: gen / splits / train / infer / eval.
// Exit codes: 0 success, 2 usage error, 1 runtime failure.

namespace {

using mgca::io::ordered_json;

void reject_unknown_keys(const ordered_json& obj, const std::set<std::string>& allowed,
                         const std::string& where) {
  for (const auto& [key, value] : obj.items())
    if (!allowed.count(key)) throw mgca::ConfigError(where + ": unknown key '" + key + "'");
}

template <typename T>
void maybe_get(const ordered_json& obj, const char* key, T& out) {
  if (obj.contains(key)) out = obj.at(key).template get<T>();
}

mgca::SynthConfig parse_synth_config(const std::string& path) {
  const ordered_json root = mgca::io::parse_json(path);
  reject_unknown_keys(root,
                      {"n_videos", "n_test_videos", "t_vid_min", "t_vid_max", "d_vid", "d_img",
                       "n_categories", "templates_per_category", "min_instances",
                       "max_instances", "min_duration", "min_gap", "sigma", "seed"},
                      path);
  mgca::SynthConfig c;
  maybe_get(root, "n_videos", c.n_videos);
  maybe_get(root, "n_test_videos", c.n_test_videos);
  maybe_get(root, "t_vid_min", c.t_vid_min);
  maybe_get(root, "t_vid_max", c.t_vid_max);
  maybe_get(root, "d_vid", c.d_vid);
  maybe_get(root, "d_img", c.d_img);
  maybe_get(root, "n_categories", c.n_categories);
  maybe_get(root, "templates_per_category", c.templates_per_category);
  maybe_get(root, "min_instances", c.min_instances);
  maybe_get(root, "max_instances", c.max_instances);
  maybe_get(root, "min_duration", c.min_duration);
  maybe_get(root, "min_gap", c.min_gap);
  maybe_get(root, "sigma", c.sigma);
  maybe_get(root, "seed", c.seed);
  return c;
}

ordered_json synth_config_json(const mgca::SynthConfig& c) {
  return ordered_json{{"n_videos", c.n_videos},
                      {"n_test_videos", c.n_test_videos},
                      {"t_vid_min", c.t_vid_min},
                      {"t_vid_max", c.t_vid_max},
                      {"d_vid", c.d_vid},
                      {"d_img", c.d_img},
                      {"n_categories", c.n_categories},
                      {"templates_per_category", c.templates_per_category},
                      {"min_instances", c.min_instances},
                      {"max_instances", c.max_instances},
                      {"min_duration", c.min_duration},
                      {"min_gap", c.min_gap},
                      {"sigma", c.sigma},
                      {"seed", c.seed}};
}

struct TrainFileConfig {
  mgca::ModelConfig model;  // data-dependent dims filled in later
  mgca::TrainConfig train;
};

TrainFileConfig parse_train_config(const std::string& path) {
  const ordered_json root = mgca::io::parse_json(path);
  reject_unknown_keys(root, {"model", "train"}, path);
  TrainFileConfig c;
  if (root.contains("model")) {
    const ordered_json& m = root.at("model");
    reject_unknown_keys(m, {"d_fpn", "levels", "strides", "head_width", "seed"},
                        path + ":model");
    maybe_get(m, "d_fpn", c.model.d_fpn);
    maybe_get(m, "levels", c.model.levels);
    maybe_get(m, "strides", c.model.strides);
    maybe_get(m, "head_width", c.model.head_width);
    maybe_get(m, "seed", c.model.seed);
  }
  if (root.contains("train")) {
    const ordered_json& t = root.at("train");
    reject_unknown_keys(t,
                        {"epochs", "warmup_epochs", "base_lr", "weight_decay", "tau", "n_neg",
                         "focal_alpha", "focal_gamma", "seed"},
                        path + ":train");
    maybe_get(t, "epochs", c.train.epochs);
    maybe_get(t, "warmup_epochs", c.train.warmup_epochs);
    maybe_get(t, "base_lr", c.train.base_lr);
    maybe_get(t, "weight_decay", c.train.weight_decay);
    maybe_get(t, "tau", c.train.tau);
    maybe_get(t, "n_neg", c.train.n_neg);
    maybe_get(t, "focal_alpha", c.train.focal.alpha);
    maybe_get(t, "focal_gamma", c.train.focal.gamma);
    maybe_get(t, "seed", c.train.seed);
  }
  return c;
}

ordered_json train_config_json(const TrainFileConfig& c) {
  return ordered_json{
      {"model",
       {{"d_fpn", c.model.d_fpn},
        {"levels", c.model.levels},
        {"strides", c.model.strides},
        {"head_width", c.model.head_width},
        {"seed", c.model.seed}}},
      {"train",
       {{"epochs", c.train.epochs},
        {"warmup_epochs", c.train.warmup_epochs},
        {"base_lr", c.train.base_lr},
        {"weight_decay", c.train.weight_decay},
        {"tau", c.train.tau},
        {"n_neg", c.train.n_neg},
        {"focal_alpha", c.train.focal.alpha},
        {"focal_gamma", c.train.focal.gamma},
        {"seed", c.train.seed}}}};
}

mgca::SplitSpec pick_split(const std::string& path, const std::vector<std::string>& categories,
                           int index) {
  const std::vector<mgca::SplitSpec> splits = mgca::io::read_splits(path, categories);
  if (index < 0 || static_cast<std::size_t>(index) >= splits.size())
    throw mgca::ConfigError("split index " + std::to_string(index) + " out of range (file has " +
                            std::to_string(splits.size()) + " splits)");
  mgca::SplitSpec s = splits[static_cast<std::size_t>(index)];
  std::sort(s.base_ids.begin(), s.base_ids.end());
  std::sort(s.novel_ids.begin(), s.novel_ids.end());
  return s;
}

int run_gen(const std::string& config_path, const std::string& out_dir, std::int64_t seed,
            bool print_config) {
  mgca::SynthConfig cfg = parse_synth_config(config_path);
  if (seed >= 0) cfg.seed = static_cast<std::uint64_t>(seed);
  if (print_config) std::cout << synth_config_json(cfg).dump(2) << "\n";
  const mgca::SynthCorpus corpus = mgca::generate_dataset(cfg);
  mgca::io::write_corpus(out_dir, corpus);
  std::cout << "wrote " << corpus.data.videos.size() << " videos ("
            << corpus.n_train << " train) to " << out_dir << "\n";
  return 0;
}

int run_splits(const std::string& categories_path, double fraction, int n_seeds,
               const std::string& out_path) {
  const ordered_json root = mgca::io::parse_json(categories_path);
  if (!root.contains("categories"))
    throw mgca::IoError(categories_path + ": no 'categories' array");
  const auto categories = root.at("categories").get<std::vector<std::string>>();
  const auto splits = mgca::make_splits(static_cast<int>(categories.size()), fraction, n_seeds);
  mgca::io::write_splits(out_path, splits, categories);
  std::cout << "wrote " << splits.size() << " splits over " << categories.size()
            << " categories to " << out_path << "\n";
  return 0;
}

int run_train(const std::string& data_dir, const std::string& split_path, int split_index,
              const std::string& config_path, const std::string& out_path, std::int64_t seed,
              bool print_config) {
  TrainFileConfig cfg = parse_train_config(config_path);
  if (seed >= 0) {
    cfg.model.seed = static_cast<std::uint64_t>(seed);
    cfg.train.seed = static_cast<std::uint64_t>(seed);
  }
  if (print_config) std::cout << train_config_json(cfg).dump(2) << "\n";

  const mgca::Dataset data = mgca::io::load_dataset(data_dir, "annotations_train.json");
  if (data.videos.empty()) throw mgca::ContractError("training set has no videos");
  const mgca::SplitSpec split = pick_split(split_path, data.categories, split_index);
  const std::vector<mgca::Tensor2D> templates =
      mgca::io::read_templates(data_dir + "/templates.bin");
  if (templates.size() != data.categories.size())
    throw mgca::IoError("template count does not match the vocabulary");

  cfg.model.d_vid = data.videos[0].f_vid.feat.cols;
  cfg.model.d_img = data.videos[0].f_img.feat.cols;
  cfg.model.d_text = templates[0].cols;
  cfg.model.n_base = static_cast<int>(split.base_ids.size());
  if (cfg.model.d_text != cfg.model.d_img)
    throw mgca::ConfigError("image and text feature dims differ");

  const std::vector<mgca::VideoSample> view = mgca::make_train_view(data.videos, split);
  if (view.empty()) throw mgca::ContractError("no training videos carry base annotations");
  const mgca::TextBank base_bank = mgca::make_base_bank(templates, split);

  mgca::TrainResult result = mgca::train_model(view, base_bank, cfg.model, cfg.train);
  for (std::size_t e = 0; e < result.epoch_means.size(); ++e) {
    const mgca::LossBreakdown& b = result.epoch_means[e];
    std::printf("epoch %2zu  total %.4f  loc %.4f  cc %.4f  app %.4f  contrast %.4f\n", e + 1,
                b.total, b.l_loc, b.l_cc, b.l_app, b.l_contrast);
  }

  std::vector<std::string> base_names;
  for (int c : split.base_ids) base_names.push_back(data.categories[static_cast<std::size_t>(c)]);
  mgca::io::save_checkpoint(out_path, result.params, cfg.model, data.categories, base_names);
  std::cout << "saved checkpoint to " << out_path << "\n";
  return 0;
}

int run_infer(const std::string& data_dir, const std::string& ckpt_path,
              const std::string& split_path, int split_index, const std::string& out_path,
              const mgca::InferConfig& ic) {
  mgca::io::Checkpoint ck = mgca::io::load_checkpoint(ckpt_path);
  const mgca::Dataset data = mgca::io::load_dataset(data_dir, "annotations_test.json");
  if (data.categories != ck.categories)
    throw mgca::VocabError("checkpoint vocabulary does not match the dataset");
  const mgca::SplitSpec split = pick_split(split_path, data.categories, split_index);

  std::vector<std::string> base_names;
  for (int c : split.base_ids) base_names.push_back(data.categories[static_cast<std::size_t>(c)]);
  if (base_names != ck.base_names)
    throw mgca::VocabError("checkpoint was trained on a different base split");

  const std::vector<mgca::Tensor2D> templates =
      mgca::io::read_templates(data_dir + "/templates.bin");
  const mgca::TextBank bank = mgca::make_bank_for(templates, split.novel_ids);

  std::vector<std::string> ids;
  std::vector<std::vector<mgca::ScoredInstance>> preds;
  for (const mgca::VideoSample& v : data.videos) {
    ids.push_back(v.id);
    preds.push_back(mgca::infer_video(v, ck.params, ck.config, split, bank, ic));
  }
  mgca::io::write_predictions(out_path, ids, preds, data.categories);
  std::cout << "wrote predictions for " << ids.size() << " videos to " << out_path << "\n";
  return 0;
}

int run_eval(const std::string& preds_path, const std::string& gt_path,
             const std::string& split_path, int split_index, const std::string& style,
             const std::string& out_path, const std::string& csv_path) {
  const mgca::Dataset gt = mgca::io::read_annotations(gt_path);
  const mgca::SplitSpec split = pick_split(split_path, gt.categories, split_index);
  const mgca::EvalConfig grid = style == "anet" ? mgca::anet_grid() : mgca::thumos_grid();

  std::vector<std::string> ids;
  std::vector<mgca::AnnotationSet> gts;
  for (const mgca::VideoSample& v : gt.videos) {
    ids.push_back(v.id);
    gts.push_back(v.annotations);
  }
  const auto preds = mgca::io::read_predictions(preds_path, ids, gt.categories);
  const mgca::EvalReport rep = mgca::evaluate(gts, preds, split, grid);
  mgca::io::write_report(out_path, rep, gt.categories);
  if (!csv_path.empty()) mgca::io::write_result_csv(csv_path, split.seed, rep);
  std::printf("map_base %.4f  map_novel %.4f  map_all %.4f\n", rep.map_base, rep.map_novel,
              rep.map_all);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"open-vocabulary temporal action localization pipeline"};
  app.require_subcommand(1);

  std::string config_path, out_path, data_dir, split_path, ckpt_path, preds_path, gt_path;
  std::string categories_path, csv_path;
  std::string style = "thumos";
  double fraction = 0.75;
  int n_seeds = 10;
  int split_index = 0;
  std::int64_t seed = -1;
  bool print_config = false;
  mgca::InferConfig ic;

  CLI::App* gen = app.add_subcommand("gen", "generate a synthetic corpus");
  gen->add_option("--config", config_path, "synthesis config JSON")->required();
  gen->add_option("--out", out_path, "output corpus directory")->required();
  gen->add_option("--seed", seed, "override the config seed");
  gen->add_flag("--print-config", print_config, "echo the effective config");

  CLI::App* splits = app.add_subcommand("splits", "generate base/novel vocabulary splits");
  splits->add_option("--categories", categories_path, "JSON file with a categories array")
      ->required();
  splits->add_option("--fraction", fraction, "base-category fraction");
  splits->add_option("--seeds", n_seeds, "number of seeded splits");
  splits->add_option("--out", out_path, "output splits JSON")->required();

  CLI::App* train = app.add_subcommand("train", "train on the base categories of a split");
  train->add_option("--data", data_dir, "corpus directory")->required();
  train->add_option("--split", split_path, "splits JSON")->required();
  train->add_option("--split-index", split_index, "which split to use");
  train->add_option("--config", config_path, "model/train config JSON")->required();
  train->add_option("--out", out_path, "output checkpoint path")->required();
  train->add_option("--seed", seed, "override model and train seeds");
  train->add_flag("--print-config", print_config, "echo the effective config");

  CLI::App* infer = app.add_subcommand("infer", "localize and classify test videos");
  infer->add_option("--data", data_dir, "corpus directory")->required();
  infer->add_option("--ckpt", ckpt_path, "checkpoint path")->required();
  infer->add_option("--split", split_path, "splits JSON")->required();
  infer->add_option("--split-index", split_index, "which split to use");
  infer->add_option("--out", out_path, "output predictions JSON")->required();
  infer->add_option("--lambda-retain", ic.triage.lambda_retain, "presence threshold");
  infer->add_option("--lambda-base", ic.triage.lambda_base, "base-class threshold");
  infer->add_option("--n-coarse", ic.n_coarse, "coarse category count");
  infer->add_option("--tau", ic.tau, "similarity temperature");
  infer->add_option("--nms-thr", ic.nms.tiou_threshold, "NMS tIoU threshold");
  infer->add_option("--max-instances", ic.nms.max_instances, "per-video instance cap");

  CLI::App* eval = app.add_subcommand("eval", "score predictions against ground truth");
  eval->add_option("--preds", preds_path, "predictions JSON")->required();
  eval->add_option("--gt", gt_path, "ground-truth annotation JSON")->required();
  eval->add_option("--split", split_path, "splits JSON")->required();
  eval->add_option("--split-index", split_index, "which split to use");
  eval->add_option("--style", style, "tIoU grid style")
      ->check(CLI::IsMember({"thumos", "anet"}));
  eval->add_option("--out", out_path, "output report JSON")->required();
  eval->add_option("--csv", csv_path, "also write a one-row results CSV");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (gen->parsed()) return run_gen(config_path, out_path, seed, print_config);
    if (splits->parsed()) return run_splits(categories_path, fraction, n_seeds, out_path);
    if (train->parsed())
      return run_train(data_dir, split_path, split_index, config_path, out_path, seed,
                       print_config);
    if (infer->parsed())
      return run_infer(data_dir, ckpt_path, split_path, split_index, out_path, ic);
    if (eval->parsed())
      return run_eval(preds_path, gt_path, split_path, split_index, style, out_path, csv_path);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
