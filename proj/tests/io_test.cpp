// Copyright 2026 The doapnn Authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#include <gtest/gtest.h>

#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <numbers>
#include <set>

#include "oracles.hpp"

using namespace doapnn;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  auto p = fs::temp_directory_path() / ("doapnn_io_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::uint32_t u32_at(const std::string& s, std::size_t pos) {
  std::uint32_t v;
  std::memcpy(&v, s.data() + pos, 4);
  return v;
}

ProgressiveModel<float> two_column_model() {
  auto m = build_progressive<float>(oracle::tiny_net(), 5, HeadPolicy::kFrozenAfterFirst, 4);
  m.add_column(1, 1);
  m.add_column(2, 2);
  return m;
}

}  // namespace

TEST(Wav, RoundTripWithinQuantization) {
  Rng rng(3);
  std::vector<std::vector<float>> ch(2, std::vector<float>(5000));
  for (auto& c : ch)
    for (auto& v : c) v = static_cast<float>(rng.uniform(-1, 1));
  ch[0][0] = 1.0f;
  ch[1][0] = -1.0f;
  const auto w = parse_wav(encode_wav_pcm16(ch, 16000));
  EXPECT_EQ(w.sample_rate, 16000);
  ASSERT_EQ(w.channels.size(), 2u);
  for (int c = 0; c < 2; ++c)
    for (std::size_t i = 0; i < 5000; ++i)
      EXPECT_LE(std::abs(w.channels[c][i] - ch[c][i]), 1.0f / 32768) << c << "," << i;
}

TEST(Wav, HeaderArithmetic) {
  const auto bytes = encode_wav_pcm16({std::vector<float>(16000)}, 16000);
  EXPECT_EQ(bytes.size(), 44u + 32000u);
  EXPECT_EQ(bytes.substr(36, 4), "data");
  EXPECT_EQ(u32_at(bytes, 40), 32000u);
  EXPECT_EQ(u32_at(bytes, 28), 32000u);  // byte rate
}

TEST(Wav, Float32Decode) {
  std::string s = "RIFF";
  auto put32 = [&](std::uint32_t v) { s.append(reinterpret_cast<char*>(&v), 4); };
  auto put16 = [&](std::uint16_t v) { s.append(reinterpret_cast<char*>(&v), 2); };
  put32(36 + 8);
  s += "WAVEfmt ";
  put32(16);
  put16(3);
  put16(1);
  put32(16000);
  put32(64000);
  put16(4);
  put16(32);
  s += "data";
  put32(8);
  const float vals[2] = {0.25f, -0.5f};
  s.append(reinterpret_cast<const char*>(vals), 8);
  const auto w = parse_wav(s);
  ASSERT_EQ(w.channels.size(), 1u);
  EXPECT_EQ(w.channels[0][0], 0.25f);
  EXPECT_EQ(w.channels[0][1], -0.5f);
}

TEST(Wav, Errors) {
  EXPECT_THROW(parse_wav("JUNKJUNKJUNK"), FormatError);
  auto bytes = encode_wav_pcm16({std::vector<float>(100)}, 16000);
  bytes[34] = 24;  // bits per sample
  EXPECT_THROW(parse_wav(bytes), FormatError);
  const auto dir = scratch("wav");
  write_wav((dir / "a.wav").string(), {std::vector<float>(800)}, 8000);
  EXPECT_THROW(read_wav((dir / "a.wav").string(), 16000), FormatError);
  EXPECT_NO_THROW(read_wav((dir / "a.wav").string(), 8000));
}

TEST(Config, SectionsCommentsAndOverrides) {
  auto c = Config::parse("seed = 7 # base\n[train]\nepochs = 100\nlr=0.001\n\n[data]\nspacings = 0.05, 0.09\n");
  EXPECT_EQ(c.get_u64("seed", 0), 7u);
  EXPECT_EQ(c.get_int("train.epochs", 0), 100);
  EXPECT_DOUBLE_EQ(c.get_double("train.lr", 0), 0.001);
  EXPECT_EQ(c.get_doubles("data.spacings", {}), (std::vector<double>{0.05, 0.09}));
  Config over;
  over.set("train.epochs", "10");
  c.merge(over);
  EXPECT_EQ(c.get_int("train.epochs", 0), 10);
  EXPECT_EQ(Config::parse(c.to_text()).values(), c.values());
  EXPECT_THROW(Config::parse("novalue\n"), ConfigError);
  EXPECT_THROW(c.get_int("train.lr", 0), ConfigError);
  EXPECT_THROW(c.require("missing"), ConfigError);
}

TEST(Synth, DeterministicAndBounded) {
  const auto a = synth_source(SynthKind::kWhite, 1.0, 5);
  const auto b = synth_source(SynthKind::kWhite, 1.0, 5);
  const auto c = synth_source(SynthKind::kWhite, 1.0, 6);
  EXPECT_EQ(a.size(), 16000u);
  EXPECT_EQ(a, b);
  EXPECT_NE(a, c);
  for (auto k : {SynthKind::kWhite, SynthKind::kSpeechShaped}) {
    float peak = 0;
    for (float v : synth_source(k, 0.5, 1)) peak = std::max(peak, std::abs(v));
    EXPECT_LE(peak, 0.9f);
    EXPECT_NEAR(peak, 0.9f, 1e-6);
  }
  EXPECT_THROW(synth_source(SynthKind::kWhite, 0, 1), InputError);
}

TEST(Synth, WhiteIsBroadband) {
  const auto x = synth_source(SynthKind::kWhite, 1.0, 12);
  const auto s = stft<float>(x, StftParams{});
  std::vector<double> power(s.bins, 0.0);
  for (std::size_t k = 0; k < s.bins; ++k)
    for (std::size_t t = 0; t < s.frames; ++t) power[k] += std::norm(s.at(k, t));
  const double peak = *std::max_element(power.begin() + 4, power.end());
  int above = 0;
  for (std::size_t k = 4; k <= 256; ++k) above += 10 * std::log10(power[k] / peak) > -60;
  EXPECT_GE(above, static_cast<int>(0.8 * 253));
}

TEST(Synth, SpeechShapedTiltsDown) {
  const auto x = synth_source(SynthKind::kSpeechShaped, 1.0, 12);
  const auto s = stft<float>(x, StftParams{});
  auto band = [&](std::size_t lo, std::size_t hi) {
    double p = 0;
    for (std::size_t k = lo; k < hi; ++k)
      for (std::size_t t = 0; t < s.frames; ++t) p += std::norm(s.at(k, t));
    return p / (hi - lo);
  };
  // One-pole response |H(w)|^2 = (1-a)^2 / (1 - 2a cos w + a^2), compared
  // between 2 kHz and 4 kHz (bins 64 and 128).
  const double a = std::exp(-2 * std::numbers::pi * 500.0 / 16000);
  auto gain = [&](double w) { return 1.0 / (1 - 2 * a * std::cos(w) + a * a); };
  const double want = 10 * std::log10(gain(std::numbers::pi / 4) / gain(std::numbers::pi / 2));
  const double drop = 10 * std::log10(band(60, 68) / band(124, 132));
  EXPECT_NEAR(drop, want, 1.0);
}

TEST(Checkpoint, ByteIdenticalAndBitExact) {
  const auto m = two_column_model();
  Config meta;
  meta.set("seed", "4");
  const auto a = encode_checkpoint(m, meta);
  EXPECT_EQ(a, encode_checkpoint(m, meta));
  EXPECT_EQ(a.substr(0, 7), "DOAPNN1");
  const auto ck = decode_checkpoint(a);
  EXPECT_EQ(encode_checkpoint(ck.model, ck.meta), a);
  EXPECT_EQ(ck.meta.get("seed", ""), "4");
  EXPECT_EQ(ck.model.num_columns(), 2u);
  EXPECT_TRUE(ck.model.head_frozen());
  EXPECT_TRUE(ck.model.column(0).frozen());
  NdArray<float> x({4, 20, 5}, 0.3f);
  EXPECT_EQ(m.predict(1, x), ck.model.predict(1, x));
  EXPECT_EQ(m.predict(2, x), ck.model.predict(2, x));
}

TEST(Checkpoint, FileRoundTrip) {
  const auto dir = scratch("ckpt");
  const auto m = two_column_model();
  save_checkpoint(m, (dir / "a.ckpt").string());
  const auto ck = load_checkpoint((dir / "a.ckpt").string());
  save_checkpoint(ck.model, (dir / "b.ckpt").string());
  std::ifstream a(dir / "a.ckpt", std::ios::binary), b(dir / "b.ckpt", std::ios::binary);
  const std::string sa((std::istreambuf_iterator<char>(a)), {}),
      sb((std::istreambuf_iterator<char>(b)), {});
  EXPECT_EQ(sa, sb);
}

TEST(Checkpoint, IncompatibleAndCorrupt) {
  const auto m = two_column_model();
  const auto bytes = encode_checkpoint(m);
  const auto& last = m.params()[m.params().size() - 1].name;
  auto bad_magic = bytes;
  bad_magic[0] = 'X';
  EXPECT_THROW(decode_checkpoint(bad_magic), IncompatibleError);
  auto v99 = bytes;
  const std::uint32_t ver = 99;
  std::memcpy(v99.data() + 7, &ver, 4);
  EXPECT_THROW(decode_checkpoint(v99), IncompatibleError);
  try {
    decode_checkpoint(bytes.substr(0, bytes.size() - 10));
    FAIL() << "truncated checkpoint accepted";
  } catch (const CorruptionError& e) {
    EXPECT_NE(std::string(e.what()).find("'" + last + "'"), std::string::npos) << e.what();
  }
}

TEST(Dataset, SplitsByUtterance) {
  const auto s = split_utterances(10, 3);
  EXPECT_EQ(std::count(s.begin(), s.end(), Split::kTest), 1);
  EXPECT_EQ(std::count(s.begin(), s.end(), Split::kVal), 1);
  EXPECT_EQ(std::count(s.begin(), s.end(), Split::kTrain), 8);
  EXPECT_EQ(s, split_utterances(10, 3));
  const auto big = split_utterances(200, 1);
  EXPECT_EQ(std::count(big.begin(), big.end(), Split::kTest), 20);
  EXPECT_THROW(split_utterances(2, 1), ConfigError);
}

TEST(Dataset, PlanHas37AnglesPerUtterancePerTask) {
  auto plan = oracle::tiny_plan(2, 5, 4);
  const auto recs = plan_manifest(plan);
  EXPECT_EQ(recs.size(), 2u * 4u * 37u);
  std::map<std::pair<int, int>, std::set<int>> angles;
  for (const auto& r : recs) angles[{r.task_id, r.utterance}].insert(r.azimuth);
  for (const auto& [key, a] : angles) {
    EXPECT_EQ(a.size(), 37u);
    EXPECT_EQ(*a.rbegin(), 180);
  }
  EXPECT_DOUBLE_EQ(recs.front().spacing, 0.05);
  EXPECT_DOUBLE_EQ(recs.back().spacing, 0.06);
}

TEST(Dataset, ManifestRoundTripAndIntegrity) {
  const auto dir = scratch("manifest");
  auto plan = oracle::tiny_plan(2, 60, 3);
  plan.threads = 2;
  const auto recs = write_dataset(plan, dir);
  const auto back = read_manifest(dir / kManifestName);
  ASSERT_EQ(back.size(), recs.size());
  for (std::size_t i = 0; i < recs.size(); ++i) {
    EXPECT_EQ(to_json(back[i]), to_json(recs[i]));
  }
  EXPECT_NO_THROW(check_manifest(back, dir));
  const auto loaded = load_tasks(dir);
  ASSERT_EQ(loaded.size(), 2u);
  EXPECT_EQ(loaded[0].train.size() + loaded[0].val.size() + loaded[0].test.size(), 12u);
  fs::remove(dir / recs[0].audio_path);
  EXPECT_THROW(check_manifest(back, dir), DataError);
}

TEST(Dataset, InMemoryMatchesRenderedWithinQuantization) {
  const auto dir = scratch("render");
  auto plan = oracle::tiny_plan(1, 90, 3);
  write_dataset(plan, dir);
  const auto disk = load_tasks(dir);
  const auto mem = generate_tasks(plan);
  ASSERT_EQ(disk[0].train.size(), mem[0].train.size());
  const auto& a = disk[0].train[0].feature;
  const auto& b = mem[0].train[0].feature;
  double worst = 0, scale = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    worst = std::max(worst, static_cast<double>(std::abs(a[i] - b[i])));
    scale = std::max(scale, static_cast<double>(std::abs(b[i])));
  }
  EXPECT_LT(worst, 1e-3 * scale);
}

TEST(Dataset, DeterministicScenes) {
  const auto plan = oracle::tiny_plan(2, 45, 3, 99);
  const auto a = plan_manifest(plan), b = plan_manifest(plan);
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_EQ(to_json(a[i]), to_json(b[i]));
  auto other = plan;
  other.seed = 100;
  EXPECT_NE(to_json(plan_manifest(other)[0]), to_json(a[0]));
}
