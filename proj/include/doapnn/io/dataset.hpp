// Copyright 2026 The doapnn Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

// Multi-spacing dataset: every source utterance is rendered at each of the
// 37 azimuths (0, 5, ..., 180) in a freshly sampled room, once per task
// (mic spacing). Splits are by utterance, so no utterance contributes
// clips to more than one split.

#pragma once

#include <algorithm>
#include <array>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <exception>
#include <filesystem>
#include <fstream>
#include <map>
#include <mutex>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "json.hpp"

#include "doapnn/acoustics.hpp"
#include "doapnn/errors.hpp"
#include "doapnn/features.hpp"
#include "doapnn/io/synth.hpp"
#include "doapnn/io/wav.hpp"
#include "doapnn/rng.hpp"
#include "doapnn/spectrum.hpp"
#include "doapnn/tensor/ndarray.hpp"

namespace doapnn {

enum class Split { kTrain, kVal, kTest };

inline std::string to_string(Split s) {
  switch (s) {
    case Split::kTrain: return "train";
    case Split::kVal: return "val";
    case Split::kTest: return "test";
  }
  return "?";
}
inline Split split_from_string(const std::string& s) {
  if (s == "train") return Split::kTrain;
  if (s == "val") return Split::kVal;
  if (s == "test") return Split::kTest;
  throw DataError("unknown split '" + s + "'");
}

// n_val = n_test = max(1, round(n / 10)), the rest train; the assignment is
// a seeded permutation of utterance indices.
inline std::vector<Split> split_utterances(int n, std::uint64_t seed) {
  if (n < 3) throw ConfigError("need at least 3 utterances to form train/val/test");
  const int held = std::max(1, static_cast<int>(std::lround(0.1 * n)));
  if (n - 2 * held < 1) throw ConfigError("too few utterances for a training split");
  std::vector<int> order(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) order[i] = i;
  Rng rng(derive_seed(seed, {0x5b11}));
  shuffle(order.begin(), order.end(), rng);
  std::vector<Split> out(static_cast<std::size_t>(n), Split::kTrain);
  for (int i = 0; i < held; ++i) out[order[i]] = Split::kTest;
  for (int i = held; i < 2 * held; ++i) out[order[i]] = Split::kVal;
  return out;
}

inline std::vector<double> default_spacings(int tasks) {
  if (tasks < 1 || tasks > 5) throw ConfigError("task count must be in [1, 5]");
  std::vector<double> s;
  for (int t = 0; t < tasks; ++t) s.push_back((5 + t) / 100.0);
  return s;
}

struct DatasetPlan {
  std::vector<double> spacings = default_spacings(5);  // task t uses spacings[t-1]
  int utterances = 10;
  int angle_step = 5;
  double seconds = 1.0;
  // Empty corpus means synthetic sources of synth_kind.
  std::vector<std::string> corpus;
  SynthKind synth_kind = SynthKind::kWhite;
  std::uint64_t seed = 0;
  SceneSampler sampler;
  DelayInterp interp = DelayInterp::kSinc;
  int sample_rate = 16000;
  int threads = 1;

  std::vector<int> angles() const {
    std::vector<int> a;
    for (int v = 0; v <= 180; v += angle_step) a.push_back(v);
    return a;
  }

  void validate() const {
    if (spacings.empty()) throw ConfigError("no tasks");
    for (std::size_t i = 0; i < spacings.size(); ++i) {
      if (!(spacings[i] > 0)) throw ConfigError("spacing must be positive");
      for (std::size_t j = 0; j < i; ++j)
        if (spacings[i] == spacings[j]) throw ConfigError("spacings must be distinct");
    }
    if (angle_step < 1 || 180 % angle_step != 0)
      throw ConfigError("angle step must divide 180");
    if (!(seconds > 0)) throw ConfigError("segment length must be positive");
    if (!corpus.empty() && static_cast<int>(corpus.size()) < utterances)
      throw ConfigError("corpus has " + std::to_string(corpus.size()) +
                        " files but " + std::to_string(utterances) + " utterances requested");
    split_utterances(utterances, seed);
  }

  std::uint64_t source_seed(int utt) const {
    return derive_seed(seed, {0x50, static_cast<std::uint64_t>(utt)});
  }
  std::uint64_t scene_seed(int task_id, int utt, int azimuth) const {
    return derive_seed(seed, {0x5c, static_cast<std::uint64_t>(task_id),
                              static_cast<std::uint64_t>(utt),
                              static_cast<std::uint64_t>(azimuth)});
  }
};

struct ManifestRecord {
  std::string id;
  int task_id = 0;
  double spacing = 0;
  int azimuth = 0;
  int utterance = 0;
  std::string source;  // corpus path or "synthetic:<kind>"
  std::uint64_t source_seed = 0;
  std::uint64_t scene_seed = 0;
  Scene scene;
  std::string audio_path;  // relative to the manifest directory
  Split split = Split::kTrain;
};

inline nlohmann::json to_json(const ManifestRecord& r) {
  const auto mics = r.scene.mic.positions();
  auto v3 = [](const Vec3& v) { return nlohmann::json::array({v[0], v[1], v[2]}); };
  nlohmann::json j;
  j["id"] = r.id;
  j["task_id"] = r.task_id;
  j["spacing"] = r.spacing;
  j["azimuth"] = r.azimuth;
  j["utterance"] = r.utterance;
  j["source"] = r.source;
  j["source_seed"] = r.source_seed;
  j["scene_seed"] = r.scene_seed;
  j["room"] = {{"dims", v3(r.scene.room.dims)},
               {"absorption", r.scene.room.absorption},
               {"tmax", r.scene.room.tmax}};
  j["mic"] = {{"center", v3(r.scene.mic.center)},
              {"axis", v3(r.scene.mic.axis)},
              {"positions", {v3(mics[0]), v3(mics[1])}}};
  j["source_position"] = v3(r.scene.source.position);
  j["range"] = r.scene.source.range;
  j["audio_path"] = r.audio_path;
  j["split"] = to_string(r.split);
  return j;
}

inline ManifestRecord record_from_json(const nlohmann::json& j) {
  auto v3 = [](const nlohmann::json& a) {
    return Vec3{a.at(0).get<double>(), a.at(1).get<double>(), a.at(2).get<double>()};
  };
  ManifestRecord r;
  try {
    r.id = j.at("id").get<std::string>();
    r.task_id = j.at("task_id").get<int>();
    r.spacing = j.at("spacing").get<double>();
    r.azimuth = j.at("azimuth").get<int>();
    r.utterance = j.at("utterance").get<int>();
    r.source = j.at("source").get<std::string>();
    r.source_seed = j.at("source_seed").get<std::uint64_t>();
    r.scene_seed = j.at("scene_seed").get<std::uint64_t>();
    r.scene.room.dims = v3(j.at("room").at("dims"));
    r.scene.room.absorption = j.at("room").at("absorption").get<double>();
    r.scene.room.tmax = j.at("room").at("tmax").get<double>();
    r.scene.mic.center = v3(j.at("mic").at("center"));
    r.scene.mic.axis = v3(j.at("mic").at("axis"));
    r.scene.mic.spacing = r.spacing;
    r.scene.source.position = v3(j.at("source_position"));
    r.scene.source.azimuth = r.azimuth;
    r.scene.source.range = j.at("range").get<double>();
    r.audio_path = j.at("audio_path").get<std::string>();
    r.split = split_from_string(j.at("split").get<std::string>());
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("malformed manifest record: ") + e.what());
  }
  if (r.azimuth < 0 || r.azimuth > 180 || r.azimuth % 5 != 0)
    throw DataError("manifest record " + r.id + " has azimuth " +
                    std::to_string(r.azimuth) + " outside {0,5,...,180}");
  return r;
}

// Records in (task, utterance, azimuth) order; scenes are sampled here.
inline std::vector<ManifestRecord> plan_manifest(const DatasetPlan& plan) {
  plan.validate();
  const auto splits = split_utterances(plan.utterances, plan.seed);
  std::vector<ManifestRecord> out;
  for (std::size_t ti = 0; ti < plan.spacings.size(); ++ti) {
    const int task = static_cast<int>(ti) + 1;
    for (int u = 0; u < plan.utterances; ++u)
      for (int az : plan.angles()) {
        ManifestRecord r;
        r.task_id = task;
        r.spacing = plan.spacings[ti];
        r.azimuth = az;
        r.utterance = u;
        r.source = plan.corpus.empty() ? "synthetic:" + to_string(plan.synth_kind)
                                       : plan.corpus[u];
        r.source_seed = plan.source_seed(u);
        r.scene_seed = plan.scene_seed(task, u, az);
        Rng rng(r.scene_seed);
        r.scene = sample_scene(rng, r.spacing, az, plan.sampler);
        r.scene.room.sample_rate = plan.sample_rate;
        char id[64];
        std::snprintf(id, sizeof id, "t%d_u%04d_a%03d", task, u, az);
        r.id = id;
        r.audio_path = "audio/" + r.id + ".wav";
        r.split = splits[u];
        out.push_back(std::move(r));
      }
  }
  return out;
}

// First `seconds` of the utterance, from the corpus or the synthesizer.
inline std::vector<float> load_source(const DatasetPlan& plan, int utt) {
  const auto n = static_cast<std::size_t>(std::llround(plan.seconds * plan.sample_rate));
  if (plan.corpus.empty())
    return synth_source(plan.synth_kind, plan.seconds, plan.source_seed(utt),
                        plan.sample_rate);
  const auto& path = plan.corpus.at(utt);
  auto w = read_wav(path, plan.sample_rate);
  auto& x = w.channels.at(0);
  if (x.size() < n)
    throw DataError(path + ": " + std::to_string(x.size()) + " samples, need " +
                    std::to_string(n));
  x.resize(n);
  return x;
}

inline std::vector<std::vector<float>> render_record(const ManifestRecord& r,
                                                     std::span<const float> source,
                                                     DelayInterp interp) {
  const auto mics = r.scene.mic.positions();
  const std::array<Rir, 2> rirs{
      simulate_rir(r.scene.room, mics[0], r.scene.source.position, interp),
      simulate_rir(r.scene.room, mics[1], r.scene.source.position, interp)};
  return render_mixture(source, rirs);
}

// Runs fn(i) for i in [0, n) on up to `threads` workers. The first
// exception is rethrown after all workers finish.
template <class Fn>
void parallel_for(std::size_t n, int threads, Fn&& fn) {
  const auto workers = static_cast<std::size_t>(std::max(1, threads));
  if (workers == 1 || n < 2) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr err;
  std::mutex mu;
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < std::min(workers, n); ++w)
    pool.emplace_back([&] {
      for (std::size_t i; (i = next++) < n;) {
        try {
          fn(i);
        } catch (...) {
          std::lock_guard lock(mu);
          if (!err) err = std::current_exception();
          next = n;
        }
      }
    });
  for (auto& t : pool) t.join();
  if (err) std::rethrow_exception(err);
}

struct Example {
  Tensor feature;  // (4, F, T)
  SpatialSpectrum target{};
  int azimuth = 0;
  int utterance = 0;
};

struct TaskData {
  int task_id = 0;
  double spacing = 0;
  std::vector<Example> train, val, test;

  const std::vector<Example>& split(Split s) const {
    switch (s) {
      case Split::kTrain: return train;
      case Split::kVal: return val;
      case Split::kTest: return test;
    }
    throw DataError("bad split");
  }
  std::vector<Example>& split(Split s) {
    return const_cast<std::vector<Example>&>(std::as_const(*this).split(s));
  }
};

inline Example make_example(const std::vector<std::vector<float>>& mixture,
                            const ManifestRecord& r, const StftParams& stft) {
  Example e;
  e.feature = extract_feature<float>(mixture, stft);
  e.target = encode_spectrum(r.azimuth);
  e.azimuth = r.azimuth;
  e.utterance = r.utterance;
  return e;
}

inline std::vector<TaskData> group_examples(const std::vector<ManifestRecord>& recs,
                                            std::vector<Example>&& examples) {
  std::vector<TaskData> tasks;
  for (std::size_t i = 0; i < recs.size(); ++i) {
    const auto& r = recs[i];
    if (r.task_id < 1) throw DataError("record " + r.id + " has task id < 1");
    if (static_cast<std::size_t>(r.task_id) > tasks.size())
      tasks.resize(static_cast<std::size_t>(r.task_id));
    auto& t = tasks[r.task_id - 1];
    t.task_id = r.task_id;
    t.spacing = r.spacing;
    t.split(r.split).push_back(std::move(examples[i]));
  }
  for (std::size_t i = 0; i < tasks.size(); ++i)
    if (tasks[i].task_id != static_cast<int>(i) + 1)
      throw DataError("manifest has no records for task " + std::to_string(i + 1));
  return tasks;
}

// Renders everything in memory; nothing touches the filesystem unless the
// corpus does.
inline std::vector<TaskData> generate_tasks(const DatasetPlan& plan,
                                            const StftParams& stft = {}) {
  const auto recs = plan_manifest(plan);
  std::vector<std::vector<float>> sources(static_cast<std::size_t>(plan.utterances));
  parallel_for(sources.size(), plan.threads,
               [&](std::size_t u) { sources[u] = load_source(plan, static_cast<int>(u)); });
  std::vector<Example> examples(recs.size());
  parallel_for(recs.size(), plan.threads, [&](std::size_t i) {
    const auto mix = render_record(recs[i], sources[recs[i].utterance], plan.interp);
    examples[i] = make_example(mix, recs[i], stft);
  });
  return group_examples(recs, std::move(examples));
}

inline constexpr const char* kManifestName = "manifest.jsonl";

// Writes <dir>/manifest.jsonl and <dir>/audio/*.wav (2-channel PCM16).
inline std::vector<ManifestRecord> write_dataset(const DatasetPlan& plan,
                                                 const std::filesystem::path& dir) {
  namespace fs = std::filesystem;
  const auto recs = plan_manifest(plan);
  fs::create_directories(dir / "audio");
  std::vector<std::vector<float>> sources(static_cast<std::size_t>(plan.utterances));
  parallel_for(sources.size(), plan.threads,
               [&](std::size_t u) { sources[u] = load_source(plan, static_cast<int>(u)); });
  parallel_for(recs.size(), plan.threads, [&](std::size_t i) {
    const auto mix = render_record(recs[i], sources[recs[i].utterance], plan.interp);
    write_wav((dir / recs[i].audio_path).string(), mix, plan.sample_rate);
  });
  std::ofstream out(dir / kManifestName);
  if (!out) throw FormatError((dir / kManifestName).string() + ": cannot open for writing");
  for (const auto& r : recs) out << to_json(r).dump() << '\n';
  return recs;
}

inline std::vector<ManifestRecord> read_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError(path.string() + ": cannot open manifest");
  std::vector<ManifestRecord> recs;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    try {
      recs.push_back(record_from_json(nlohmann::json::parse(line)));
    } catch (const nlohmann::json::exception& e) {
      throw DataError(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return recs;
}

// Referential integrity and split disjointness; throws DataError.
inline void check_manifest(const std::vector<ManifestRecord>& recs,
                           const std::filesystem::path& dir) {
  std::map<int, Split> utt_split;
  for (const auto& r : recs) {
    if (!std::filesystem::exists(dir / r.audio_path))
      throw DataError("record " + r.id + " references missing file " + r.audio_path);
    auto [it, fresh] = utt_split.emplace(r.utterance, r.split);
    if (!fresh && it->second != r.split)
      throw DataError("utterance " + std::to_string(r.utterance) +
                      " appears in both " + to_string(it->second) + " and " +
                      to_string(r.split));
  }
}

// Loads a rendered dataset; features are recomputed from the WAVs.
inline std::vector<TaskData> load_tasks(const std::filesystem::path& dir,
                                        const StftParams& stft = {}, int threads = 1) {
  const auto recs = read_manifest(dir / kManifestName);
  check_manifest(recs, dir);
  std::vector<Example> examples(recs.size());
  parallel_for(recs.size(), threads, [&](std::size_t i) {
    const auto w = read_wav((dir / recs[i].audio_path).string(), stft.sample_rate);
    if (w.channels.size() != 2)
      throw DataError(recs[i].audio_path + ": expected 2 channels");
    examples[i] = make_example(w.channels, recs[i], stft);
  });
  return group_examples(recs, std::move(examples));
}

}  // namespace doapnn
