// Corpus, checkpoint, run-config, and CLI harness tests.
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

#include "headlab/checkpoint.hpp"
#include "headlab/cli.hpp"
#include "headlab/corpus.hpp"
#include "headlab/errors.hpp"
#include "headlab/harness.hpp"

using namespace headlab;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  TempDir() {
    path = fs::temp_directory_path() /
           ("headlab_test_" + std::to_string(std::random_device{}()));
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  std::string file(const std::string& name) const { return (path / name).string(); }
};

std::string markov_text(int64_t n, uint64_t seed) {
  // Low-entropy order-1 chain over 'a'..'f' + space.
  const std::string alphabet = "abcdef ";
  std::mt19937_64 rng(seed);
  std::string out;
  out.reserve(n);
  size_t state = 0;
  for (int64_t i = 0; i < n; ++i) {
    // Strong bias toward cycling to the next symbol.
    std::discrete_distribution<size_t> next({60, 10, 10, 5, 5, 5, 5});
    state = (state + 1 + next(rng)) % alphabet.size();
    out.push_back(alphabet[state]);
  }
  return out;
}

}  // namespace

TEST_CASE("char tokenization: sorted dense ids, unk reserved last") {
  Corpus c = tokenize_corpus("banana band", VocabPolicy::kChar, {0.8, 0.1});
  // Train split covers "banana b" (8 of 11 chars): symbols {' ','a','b','n'}.
  CHECK(c.vocab.size() == 5);  // 4 + <unk>
  CHECK(c.vocab.id_to_token[0] == " ");
  CHECK(c.vocab.id_to_token[1] == "a");
  CHECK(c.vocab.id_to_token[2] == "b");
  CHECK(c.vocab.id_to_token[3] == "n");
  CHECK(c.vocab.unk_id == 4);
  CHECK(c.train.ids == std::vector<int32_t>{2, 1, 3, 1, 3, 1, 0, 2});
  // 'd' never appears in train -> unk in the test split.
  CHECK(c.test.ids.back() == c.vocab.unk_id);
  CHECK(c.train.ids.size() + c.valid.ids.size() + c.test.ids.size() == 11);
}

TEST_CASE("word tokenization: frequency-capped vocab") {
  Corpus c = tokenize_corpus("a b a b a c d e", VocabPolicy::kWord,
                             {1.0, 0.0}, /*word_vocab_cap=*/4);
  // Top 3 by frequency: a(3), b(2), then alphabetical among the count-1 ties.
  CHECK(c.vocab.size() == 4);  // 3 + <unk>
  CHECK(c.vocab.token_to_id.count("a") == 1);
  CHECK(c.vocab.token_to_id.count("b") == 1);
  CHECK(c.vocab.token_to_id.count("c") == 1);
  CHECK(c.vocab.token_to_id.count("e") == 0);
  CHECK(c.train.ids.back() == c.vocab.unk_id);
}

TEST_CASE("empty train split raises DataError") {
  CHECK_THROWS_AS(tokenize_corpus("", VocabPolicy::kChar), DataError);
}

TEST_CASE("segment batcher: lane layout and shifted targets") {
  CorpusSplit split;
  split.name = "train";
  for (int32_t i = 0; i < 26; ++i) split.ids.push_back(i);
  SegmentBatcher b(split, /*seg_len=*/3, /*lanes=*/2);
  // lane_stride = 13, steps_per_epoch = (13-1)/3 = 4.
  CHECK(b.steps_per_epoch() == 4);
  CHECK(b.wraps_at(0));
  CHECK(!b.wraps_at(1));
  CHECK(b.wraps_at(4));

  auto batch0 = b.batch(0);
  REQUIRE(batch0.size() == 2);
  CHECK(batch0[0].inputs == std::vector<int32_t>{0, 1, 2});
  CHECK(batch0[0].targets == std::vector<int32_t>{1, 2, 3});
  CHECK(batch0[1].inputs == std::vector<int32_t>{13, 14, 15});

  auto batch1 = b.batch(1);
  CHECK(batch1[0].inputs == std::vector<int32_t>{3, 4, 5});  // adjacent
  // Epoch wrap returns to the first segment.
  CHECK(b.batch(4)[0].inputs == batch0[0].inputs);

  CorpusSplit tiny;
  tiny.name = "tiny";
  tiny.ids = {1, 2, 3};
  CHECK_THROWS_AS(SegmentBatcher(tiny, 3, 2), DataError);
}

TEST_CASE("checkpoint round trip is bitwise for model, gates, optimizer") {
  TempDir tmp;
  ModelConfig cfg;
  cfg.d = 16;
  cfg.heads = 4;
  cfg.n_persist = 6;
  cfg.layers = 2;
  cfg.seg_len = 8;
  cfg.mem_len = 8;
  cfg.vocab = 9;
  std::mt19937_64 rng(12);
  AllAttModel model(cfg, rng);
  GateSet gates = GateSet::make(2, 4, 1.5);
  gates.pi[1].data()[2] = -0.75;

  Optimizer opt;
  for (auto& [name, t] : model.named_parameters()) opt.add_param(name, t);
  // One step so the moment buffers are populated.
  for (auto& s : opt.slots()) {
    s.param.grad().assign(s.param.size(), 0.01);
  }
  opt.step(1e-3);

  const std::string path = tmp.file("model.ckpt");
  Checkpoint::from_model(model, &gates, &opt).save(path);
  Checkpoint loaded = Checkpoint::load(path);

  AllAttModel restored = loaded.restore_model();
  auto orig_params = model.named_parameters();
  auto rest_params = restored.named_parameters();
  REQUIRE(orig_params.size() == rest_params.size());
  for (size_t i = 0; i < orig_params.size(); ++i) {
    CHECK(orig_params[i].first == rest_params[i].first);
    CHECK(orig_params[i].second.data() == rest_params[i].second.data());
  }

  auto rgates = loaded.restore_gates();
  REQUIRE(rgates.has_value());
  for (int64_t l = 0; l < 2; ++l)
    CHECK(rgates->pi[l].data() == gates.pi[l].data());
  CHECK(rgates->hc.beta == gates.hc.beta);

  Optimizer opt2;
  for (auto& [name, t] : restored.named_parameters()) opt2.add_param(name, t);
  loaded.restore_optimizer(opt2);
  CHECK(opt2.step_count() == 1);
  CHECK(opt2.slots()[0].state.m == opt.slots()[0].state.m);
  CHECK(opt2.slots()[0].state.v == opt.slots()[0].state.v);

  CHECK_THROWS_AS(Checkpoint::load(tmp.file("missing.ckpt")), DataError);
}

TEST_CASE("checkpoint preserves ragged per-layer head counts") {
  TempDir tmp;
  ModelConfig cfg;
  cfg.d = 16;
  cfg.heads = 4;
  cfg.n_persist = 4;
  cfg.layers = 2;
  cfg.seg_len = 4;
  cfg.mem_len = 4;
  cfg.vocab = 7;
  std::mt19937_64 rng(3);
  AllAttModel model(cfg, rng);
  GateSet gates = GateSet::make(2, 4, 3.0);
  gates.pi[0].data()[1] = -3.0;
  gates.pi[0].data()[2] = -3.0;
  gates.mode = GateMode::kFrozen;
  AllAttModel pruned =
      apply_structural_prune(model, extract_prune_mask(gates), gates);
  REQUIRE(pruned.heads_per_layer() == std::vector<int64_t>{2, 4});

  const std::string path = tmp.file("pruned.ckpt");
  Checkpoint::from_model(pruned, nullptr, nullptr).save(path);
  AllAttModel restored = Checkpoint::load(path).restore_model();
  CHECK(restored.heads_per_layer() == std::vector<int64_t>{2, 4});
  CHECK(restored.accounted_param_count() == pruned.accounted_param_count());
}

TEST_CASE("run config: kv round trip") {
  TempDir tmp;
  RunConfig rc;
  rc.d = 48;
  rc.heads = 6;
  rc.lambda = 0.03;
  rc.no_output_scaling = true;
  rc.data_path = "/tmp/some corpus.txt";
  rc.seed = 99;
  const std::string path = tmp.file("run.cfg");
  rc.save(path);
  RunConfig back = RunConfig::from_file(path);
  CHECK(back.d == 48);
  CHECK(back.heads == 6);
  CHECK(back.lambda == 0.03);
  CHECK(back.no_output_scaling);
  CHECK(!back.no_lambda_warmup);
  CHECK(back.data_path == "/tmp/some corpus.txt");
  CHECK(back.seed == 99);
  CHECK(back.to_kv() == rc.to_kv());

  CHECK_THROWS_AS(RunConfig().set_kv("bogus_key", "1"), UsageError);
}

TEST_CASE("train is reproducible from (config, seed, corpus)") {
  TempDir tmp;
  std::ofstream(tmp.file("corpus.txt")) << markov_text(20000, 1);

  RunConfig rc;
  rc.data_path = tmp.file("corpus.txt");
  rc.d = 16;
  rc.heads = 4;
  rc.n_persist = 8;
  rc.layers = 2;
  rc.seg_len = 16;
  rc.mem_len = 16;
  rc.lanes = 2;
  rc.steps = 25;
  rc.seed = 7;
  rc.dropout_att = 0.1;
  rc.dropout_emb = 0.05;
  rc.dropout_hidden = 0.05;

  Corpus corpus = load_corpus(rc);
  BaselineRun a = train_baseline(rc, corpus);
  BaselineRun b = train_baseline(rc, corpus);
  REQUIRE(a.trace.size() == b.trace.size());
  for (size_t i = 0; i < a.trace.size(); ++i)
    CHECK(a.trace[i].nll == b.trace[i].nll);  // bitwise
  CHECK(a.eval.metric == b.eval.metric);
}

TEST_CASE("cli: cost sweep csv contains the txl half-sparsity anchor") {
  TempDir tmp;
  const std::string out = tmp.file("sweep.csv");
  CHECK(run_subcommand({"cost", "--arch", "txl", "--sweep", "3", "--out", out}) == 0);
  std::ifstream f(out);
  REQUIRE(f.good());
  std::string header, line_mid;
  std::getline(f, header);
  CHECK(header == "sparsity,arch,param_ratio,mac_ratio,params,macs");
  std::getline(f, line_mid);  // sparsity 0
  std::getline(f, line_mid);  // sparsity 0.5
  std::istringstream is(line_mid);
  std::string sparsity, arch, pr, mr;
  std::getline(is, sparsity, ',');
  std::getline(is, arch, ',');
  std::getline(is, pr, ',');
  std::getline(is, mr, ',');
  CHECK(arch == "txl");
  CHECK(std::stod(sparsity) == doctest::Approx(0.5));
  CHECK(std::stod(pr) == doctest::Approx(0.8076923077).epsilon(1e-6));
  CHECK(std::stod(mr) == doctest::Approx(0.7285714286).epsilon(1e-6));
}

TEST_CASE("cli: exit codes for usage and data errors") {
  CHECK(run_subcommand({"definitely-not-a-command"}) == 2);
  CHECK(run_subcommand({"cost", "--arch", "nope"}) == 2);
  CHECK(run_subcommand({"train", "--data", "/nonexistent/corpus.txt",
                        "--out-dir", "/tmp/headlab_never"}) == 3);
  CHECK(run_subcommand({"prune"}) == 2);  // missing --checkpoint
  CHECK(run_subcommand({"eval"}) == 2);
}

TEST_CASE("cli: train then eval round trip on a tiny corpus") {
  TempDir tmp;
  std::ofstream(tmp.file("corpus.txt")) << markov_text(30000, 2);
  const std::string out_dir = tmp.file("run");
  const int rc = run_subcommand(
      {"train", "--data", tmp.file("corpus.txt"), "--steps", "20", "--d", "16",
       "--heads", "4", "--n-persist", "8", "--layers", "2", "--seg-len", "16",
       "--mem-len", "16", "--lanes", "2", "--out-dir", out_dir});
  CHECK(rc == 0);
  CHECK(fs::exists(out_dir + "/baseline.ckpt"));
  CHECK(fs::exists(out_dir + "/run_config.txt"));
  CHECK(fs::exists(out_dir + "/metrics.jsonl"));

  CHECK(run_subcommand({"eval", "--data", tmp.file("corpus.txt"),
                        "--checkpoint", out_dir + "/baseline.ckpt", "--seg-len",
                        "16", "--split", "valid"}) == 0);

  // Config file resolution: same run driven by the saved config.
  CHECK(run_subcommand({"eval", "--config", out_dir + "/run_config.txt",
                        "--checkpoint", out_dir + "/baseline.ckpt"}) == 0);
}
