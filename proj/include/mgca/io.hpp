#pragma once

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "mgca/data.hpp"
#include "mgca/errors.hpp"
#include "mgca/evaluation.hpp"
#include "mgca/net.hpp"
#include "mgca/serial.hpp"
#include "mgca/synth.hpp"
#include "mgca/tensor.hpp"

// On-disk formats: little-endian binary feature matrices, JSON annotations,
// predictions, splits and reports, CSV result rows, and binary checkpoints
// with a JSON sidecar describing the model they belong to. All writers are
// deterministic for identical inputs.

namespace mgca::io {

using ordered_json = nlohmann::ordered_json;

inline std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);
  std::string data((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (!in.good() && !in.eof()) throw IoError("read failed for " + path);
  return data;
}

inline void write_file(const std::string& path, const std::string& data) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot create " + path);
  out.write(data.data(), static_cast<std::streamsize>(data.size()));
  if (!out.good()) throw IoError("write failed for " + path);
}

inline constexpr std::uint32_t kFeatureVersion = 1;

inline void write_feature_file(const std::string& path, const FeatureMatrix& m) {
  std::string buf;
  buf += "MGCA";
  serial::put_u32(buf, kFeatureVersion);
  serial::put_u32(buf, static_cast<std::uint32_t>(m.feat.rows));
  serial::put_u32(buf, static_cast<std::uint32_t>(m.feat.cols));
  serial::put_f64(buf, m.rate);
  for (double v : m.feat.data) serial::put_f64(buf, v);
  write_file(path, buf);
}

inline FeatureMatrix read_feature_file(const std::string& path) {
  const std::string buf = read_file(path);
  serial::ByteReader r(buf);
  if (r.raw(4) != "MGCA") throw IoError(path + ": not a feature file");
  if (r.u32() != kFeatureVersion) throw IoError(path + ": unsupported feature version");
  const std::uint32_t rows = r.u32();
  const std::uint32_t cols = r.u32();
  FeatureMatrix m;
  m.rate = r.f64();
  if (!(m.rate > 0.0)) throw IoError(path + ": non-positive frame rate");
  m.feat = Tensor2D(static_cast<int>(rows), static_cast<int>(cols));
  for (double& v : m.feat.data) v = r.f64();
  if (!r.exhausted()) throw IoError(path + ": trailing bytes");
  return m;
}

inline ordered_json parse_json(const std::string& path) {
  try {
    return ordered_json::parse(read_file(path));
  } catch (const nlohmann::json::exception& e) {
    throw IoError(path + ": " + e.what());
  }
}

// Annotation JSON covers the vocabulary and every video's labeled intervals;
// feature matrices live in sibling binary files keyed by video id.
inline void write_annotations(const std::string& path, const Dataset& data, int begin,
                              int end) {
  ordered_json root;
  root["version"] = 1;
  root["categories"] = data.categories;
  ordered_json videos = ordered_json::object();
  for (int i = begin; i < end; ++i) {
    const VideoSample& v = data.videos[static_cast<std::size_t>(i)];
    ordered_json ann = ordered_json::array();
    for (const ActionInstance& a : v.annotations) {
      ordered_json item;
      item["t_s"] = a.t_s;
      item["t_e"] = a.t_e;
      item["label"] = data.categories[static_cast<std::size_t>(a.category)];
      ann.push_back(item);
    }
    ordered_json vid;
    vid["duration_sec"] = v.duration_sec;
    vid["annotations"] = ann;
    videos[v.id] = vid;
  }
  root["videos"] = videos;
  write_file(path, root.dump(2) + "\n");
}

// Reads vocabulary, durations and annotations; features stay empty until
// load_features fills them.
inline Dataset read_annotations(const std::string& path) {
  const ordered_json root = parse_json(path);
  Dataset data;
  try {
    data.categories = root.at("categories").get<std::vector<std::string>>();
    for (const auto& [id, vid] : root.at("videos").items()) {
      VideoSample v;
      v.id = id;
      v.duration_sec = vid.at("duration_sec").get<double>();
      for (const auto& item : vid.at("annotations")) {
        ActionInstance a;
        a.t_s = item.at("t_s").get<double>();
        a.t_e = item.at("t_e").get<double>();
        a.category = data.category_index(item.at("label").get<std::string>());
        v.annotations.push_back(a);
      }
      data.videos.push_back(std::move(v));
    }
  } catch (const nlohmann::json::exception& e) {
    throw IoError(path + ": " + e.what());
  }
  for (const VideoSample& v : data.videos) {
    for (const ActionInstance& a : v.annotations)
      if (!(a.t_s >= 0.0 && a.t_s <= a.t_e && a.t_e <= v.duration_sec))
        throw IoError(path + ": annotation outside [0, duration] in video " + v.id);
  }
  return data;
}

inline void write_features(const std::string& dir, const Dataset& data) {
  std::filesystem::create_directories(dir);
  for (const VideoSample& v : data.videos) {
    write_feature_file(dir + "/" + v.id + ".vid.bin", v.f_vid);
    write_feature_file(dir + "/" + v.id + ".img.bin", v.f_img);
  }
}

inline void load_features(const std::string& dir, Dataset& data) {
  for (VideoSample& v : data.videos) {
    v.f_vid = read_feature_file(dir + "/" + v.id + ".vid.bin");
    v.f_img = read_feature_file(dir + "/" + v.id + ".img.bin");
  }
}

// All template embeddings stacked into one matrix, grouped by category; the
// rate field carries the per-category group size.
inline void write_templates(const std::string& path, const std::vector<Tensor2D>& templates) {
  if (templates.empty()) throw ContractError("write_templates: empty template list");
  const int m = templates[0].rows;
  const int d = templates[0].cols;
  FeatureMatrix stacked;
  stacked.rate = m;
  stacked.feat = Tensor2D(static_cast<int>(templates.size()) * m, d);
  int row = 0;
  for (const Tensor2D& t : templates) {
    if (t.rows != m || t.cols != d)
      throw DimensionError("write_templates: ragged template shapes");
    for (int r = 0; r < m; ++r)
      for (int c = 0; c < d; ++c) stacked.feat.at(row + r, c) = t.at(r, c);
    row += m;
  }
  write_feature_file(path, stacked);
}

inline std::vector<Tensor2D> read_templates(const std::string& path) {
  const FeatureMatrix stacked = read_feature_file(path);
  const int m = static_cast<int>(stacked.rate);
  if (m < 1 || stacked.feat.rows % m != 0)
    throw IoError(path + ": template group size does not divide row count");
  std::vector<Tensor2D> out;
  for (int base = 0; base < stacked.feat.rows; base += m) {
    Tensor2D t(m, stacked.feat.cols);
    for (int r = 0; r < m; ++r)
      for (int c = 0; c < stacked.feat.cols; ++c) t.at(r, c) = stacked.feat.at(base + r, c);
    out.push_back(std::move(t));
  }
  return out;
}

inline void write_splits(const std::string& path, const std::vector<SplitSpec>& splits,
                         const std::vector<std::string>& categories) {
  ordered_json root;
  root["fraction"] = splits.empty() ? 0.0 : splits[0].base_fraction;
  ordered_json arr = ordered_json::array();
  for (const SplitSpec& s : splits) {
    ordered_json one;
    one["seed"] = s.seed;
    ordered_json base = ordered_json::array(), novel = ordered_json::array();
    for (int c : s.base_ids) base.push_back(categories[static_cast<std::size_t>(c)]);
    for (int c : s.novel_ids) novel.push_back(categories[static_cast<std::size_t>(c)]);
    one["base"] = base;
    one["novel"] = novel;
    arr.push_back(one);
  }
  root["splits"] = arr;
  write_file(path, root.dump(2) + "\n");
}

inline std::vector<SplitSpec> read_splits(const std::string& path,
                                          const std::vector<std::string>& categories) {
  const ordered_json root = parse_json(path);
  std::vector<SplitSpec> out;
  Dataset lookup;
  lookup.categories = categories;
  try {
    const double fraction = root.at("fraction").get<double>();
    for (const auto& one : root.at("splits")) {
      SplitSpec s;
      s.seed = one.at("seed").get<std::uint64_t>();
      s.base_fraction = fraction;
      for (const auto& name : one.at("base"))
        s.base_ids.push_back(lookup.category_index(name.get<std::string>()));
      for (const auto& name : one.at("novel"))
        s.novel_ids.push_back(lookup.category_index(name.get<std::string>()));
      if (s.base_ids.empty() || s.novel_ids.empty())
        throw IoError(path + ": split with an empty side");
      if (s.base_ids.size() + s.novel_ids.size() != categories.size())
        throw IoError(path + ": split does not cover the vocabulary");
      out.push_back(std::move(s));
    }
  } catch (const nlohmann::json::exception& e) {
    throw IoError(path + ": " + e.what());
  }
  return out;
}

inline void write_predictions(const std::string& path,
                              const std::vector<std::string>& video_ids,
                              const std::vector<std::vector<ScoredInstance>>& preds,
                              const std::vector<std::string>& categories) {
  if (video_ids.size() != preds.size())
    throw DimensionError("write_predictions: id/prediction count mismatch");
  ordered_json videos = ordered_json::object();
  for (std::size_t v = 0; v < video_ids.size(); ++v) {
    ordered_json arr = ordered_json::array();
    for (const ScoredInstance& s : preds[v]) {
      ordered_json item;
      item["t_s"] = s.interval.t_s;
      item["t_e"] = s.interval.t_e;
      item["label"] = categories[static_cast<std::size_t>(s.category)];
      item["score"] = s.score;
      arr.push_back(item);
    }
    videos[video_ids[v]] = arr;
  }
  ordered_json root;
  root["videos"] = videos;
  write_file(path, root.dump(2) + "\n");
}

// Returns predictions aligned with video_ids; videos absent from the file get
// empty lists, unknown video ids or labels are rejected.
inline std::vector<std::vector<ScoredInstance>> read_predictions(
    const std::string& path, const std::vector<std::string>& video_ids,
    const std::vector<std::string>& categories) {
  const ordered_json root = parse_json(path);
  Dataset lookup;
  lookup.categories = categories;
  std::map<std::string, std::size_t> index;
  for (std::size_t i = 0; i < video_ids.size(); ++i) index[video_ids[i]] = i;
  std::vector<std::vector<ScoredInstance>> out(video_ids.size());
  try {
    for (const auto& [id, arr] : root.at("videos").items()) {
      auto it = index.find(id);
      if (it == index.end()) throw IoError(path + ": unknown video id " + id);
      for (const auto& item : arr) {
        ScoredInstance s;
        s.interval.t_s = item.at("t_s").get<double>();
        s.interval.t_e = item.at("t_e").get<double>();
        s.category = lookup.category_index(item.at("label").get<std::string>());
        s.score = item.at("score").get<double>();
        out[it->second].push_back(s);
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw IoError(path + ": " + e.what());
  }
  return out;
}

inline std::string format_threshold(double thr) {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "%.2f", thr);
  return buf;
}

inline void write_report(const std::string& path, const EvalReport& rep,
                         const std::vector<std::string>& categories) {
  ordered_json ap = ordered_json::object();
  for (const auto& [cls, per_thr] : rep.ap) {
    ordered_json row = ordered_json::object();
    for (const auto& [thr, v] : per_thr) row[format_threshold(thr)] = v;
    ap[categories[static_cast<std::size_t>(cls)]] = row;
  }
  ordered_json root;
  root["ap"] = ap;
  root["map_base"] = rep.map_base;
  root["map_novel"] = rep.map_novel;
  root["map_all"] = rep.map_all;
  write_file(path, root.dump(2) + "\n");
}

inline void write_result_csv(const std::string& path, std::uint64_t split_seed,
                             const EvalReport& rep) {
  char line[160];
  std::snprintf(line, sizeof(line), "%llu,%.6f,%.6f,%.6f\n",
                static_cast<unsigned long long>(split_seed), rep.map_base, rep.map_novel,
                rep.map_all);
  write_file(path, std::string("split_seed,map_base,map_novel,map_all\n") + line);
}

// Corpus directory layout: annotations_train.json / annotations_test.json
// (both carrying the full vocabulary), per-video feature files under
// features/, and the stacked text templates.
inline void write_corpus(const std::string& dir, const SynthCorpus& corpus) {
  std::filesystem::create_directories(dir);
  const int total = static_cast<int>(corpus.data.videos.size());
  write_annotations(dir + "/annotations_train.json", corpus.data, 0, corpus.n_train);
  write_annotations(dir + "/annotations_test.json", corpus.data, corpus.n_train, total);
  write_features(dir + "/features", corpus.data);
  write_templates(dir + "/templates.bin", corpus.templates);
}

inline Dataset load_dataset(const std::string& dir, const std::string& annotations_name) {
  Dataset d = read_annotations(dir + "/" + annotations_name);
  load_features(dir + "/features", d);
  return d;
}

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
  ModelParams params;
  ModelConfig config;
  std::vector<std::string> categories;  // full vocabulary at train time
  std::vector<std::string> base_names;  // classifier column order
};

inline void save_checkpoint(const std::string& path, ModelParams& params,
                            const ModelConfig& cfg,
                            const std::vector<std::string>& categories,
                            const std::vector<std::string>& base_names) {
  std::string buf;
  buf += "MGCP";
  serial::put_u32(buf, kCheckpointVersion);
  serial::put_u64(buf, cfg.digest());
  auto named = params.named();
  serial::put_u32(buf, static_cast<std::uint32_t>(named.size()));
  for (auto& [name, t] : named) {
    serial::put_str(buf, name);
    serial::put_u32(buf, static_cast<std::uint32_t>(t->rows));
    serial::put_u32(buf, static_cast<std::uint32_t>(t->cols));
    for (double v : t->data) serial::put_f64(buf, v);
  }
  write_file(path, buf);

  ordered_json meta;
  meta["model_config"] = {{"d_vid", cfg.d_vid},   {"d_fpn", cfg.d_fpn},
                          {"d_img", cfg.d_img},   {"d_text", cfg.d_text},
                          {"levels", cfg.levels}, {"strides", cfg.strides},
                          {"n_base", cfg.n_base}, {"head_width", cfg.head_width},
                          {"seed", cfg.seed}};
  meta["categories"] = categories;
  meta["base"] = base_names;
  write_file(path + ".meta.json", meta.dump(2) + "\n");
}

inline Checkpoint load_checkpoint(const std::string& path) {
  Checkpoint ck;
  const ordered_json meta = parse_json(path + ".meta.json");
  try {
    const ordered_json& mc = meta.at("model_config");
    ck.config.d_vid = mc.at("d_vid").get<int>();
    ck.config.d_fpn = mc.at("d_fpn").get<int>();
    ck.config.d_img = mc.at("d_img").get<int>();
    ck.config.d_text = mc.at("d_text").get<int>();
    ck.config.levels = mc.at("levels").get<int>();
    ck.config.strides = mc.at("strides").get<std::vector<int>>();
    ck.config.n_base = mc.at("n_base").get<int>();
    ck.config.head_width = mc.at("head_width").get<int>();
    ck.config.seed = mc.at("seed").get<std::uint64_t>();
    ck.categories = meta.at("categories").get<std::vector<std::string>>();
    ck.base_names = meta.at("base").get<std::vector<std::string>>();
  } catch (const nlohmann::json::exception& e) {
    throw IoError(path + ".meta.json: " + e.what());
  }
  ck.config.validate();

  const std::string buf = read_file(path);
  serial::ByteReader r(buf);
  if (r.raw(4) != "MGCP") throw IoError(path + ": not a checkpoint file");
  if (r.u32() != kCheckpointVersion) throw IoError(path + ": unsupported checkpoint version");
  if (r.u64() != ck.config.digest())
    throw IoError(path + ": checkpoint does not match its sidecar config");

  ck.params = init_params(ck.config);
  auto named = ck.params.named();
  const std::uint32_t count = r.u32();
  if (count != named.size()) throw IoError(path + ": unexpected tensor count");
  for (auto& [name, t] : named) {
    if (r.str() != name) throw IoError(path + ": tensor name mismatch, expected " + name);
    if (r.u32() != static_cast<std::uint32_t>(t->rows) ||
        r.u32() != static_cast<std::uint32_t>(t->cols))
      throw IoError(path + ": tensor shape mismatch for " + name);
    for (double& v : t->data) v = r.f64();
  }
  if (!r.exhausted()) throw IoError(path + ": trailing bytes");
  return ck;
}

}  // namespace mgca::io
