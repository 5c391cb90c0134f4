#include <doctest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>

namespace fs = std::filesystem;

namespace {

const fs::path kWork = fs::temp_directory_path() / "ac_cli_test";

int run(const std::string& args) {
  const std::string cmd = std::string(AUDIOCAP_CLI) + " " + args + " >" + (kWork / "stdout.txt").string() + " 2>" +
                          (kWork / "stderr.txt").string();
  const int raw = std::system(cmd.c_str());
  REQUIRE(WIFEXITED(raw));
  return WEXITSTATUS(raw);
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

const char* kTinyConfig =
    "[synth]\ntrain = 12\nval = 4\ntest = 4\nclip_seconds = 0.5\nsample_rate = 16000\n"
    "[codec]\nstages = 2\ncodebook_size = 8\niterations = 3\nmax_train_frames = 500\n"
    "[embedder]\nepochs = 1\nbatch_size = 4\n"
    "[captioner]\nhidden = 8\nff = 16\nmcm_stages = 2\n"
    "[captioner.pretrain]\nepochs = 1\nmasked_stages = 2\n"
    "[captioner.finetune]\nepochs = 1\n"
    "[generation]\nnum_candidates = 3\n";

std::map<std::string, std::string> snapshot(const fs::path& root) {
  std::map<std::string, std::string> files;
  for (const auto& e : fs::recursive_directory_iterator(root))
    if (e.is_regular_file()) files[fs::relative(e.path(), root).string()] = slurp(e.path());
  return files;
}

struct Workdir {
  Workdir() {
    fs::remove_all(kWork);
    fs::create_directories(kWork);
    std::ofstream(kWork / "tiny.cfg") << kTinyConfig;
  }
  ~Workdir() { fs::remove_all(kWork); }
};

}  // namespace

TEST_CASE("usage errors exit 2") {
  Workdir w;
  CHECK(run("") == 2);
  CHECK(run("no-such-command") == 2);
  CHECK(run("synth --no-such-flag") == 2);
  CHECK(run("synth --set missing_equals") == 2);
  CHECK(run("--help") == 0);
  CHECK(run("caption --help") == 0);
  CHECK(slurp(kWork / "stdout.txt").find("--top-p") != std::string::npos);
}

TEST_CASE("config errors exit 3 and 5") {
  Workdir w;
  CHECK(run("synth --config /nonexistent/dir/a.cfg") == 3);
  std::ofstream(kWork / "bad.cfg") << "[rerank]\nw_enc = 2\n";
  CHECK(run("synth --config " + (kWork / "bad.cfg").string()) == 5);
  CHECK(run("synth --set rerank.w_enc=2") == 5);
  CHECK(run("synth --set nosuch.key=1") == 5);
  CHECK(slurp(kWork / "stderr.txt").find("nosuch.key") != std::string::npos);
}

TEST_CASE("missing inputs exit 4, corrupt artifacts exit 6") {
  Workdir w;
  const auto out = (kWork / "out").string();
  CHECK(run("train-codec -o " + out + " --manifest /nonexistent/manifest.jsonl") == 4);
  CHECK(run("train-embed -o " + out) == 4);
  CHECK(run("synth -c " + (kWork / "tiny.cfg").string() + " -o " + out) == 0);
  std::ofstream(kWork / "junk.ckpt") << "garbage";
  CHECK(run("encode -o " + out + " --codec " + (kWork / "junk.ckpt").string()) == 6);
}

TEST_CASE("tiny pipeline is byte-reproducible") {
  Workdir w;
  const auto cfg = (kWork / "tiny.cfg").string();
  auto pipeline = [&](const fs::path& out) {
    const std::string common = " -c " + cfg + " --seed 5 -o " + out.string();
    for (const char* stage : {"synth", "train-codec", "encode", "train-embed", "train-captioner", "caption", "retrieve",
                              "eval-captions", "eval-retrieval"}) {
      INFO(stage);
      REQUIRE(run(std::string(stage) + common) == 0);
    }
    REQUIRE(run("soup" + common + " --checkpoint " + (out / "captioner/captioner.ckpt").string() + " --checkpoint " +
                (out / "captioner/captioner.ckpt").string()) == 0);
    REQUIRE(run("ensemble-caption" + common + " --captioner " + (out / "captioner/captioner.ckpt").string() +
                " --captioner " + (out / "soup/soup.ckpt").string()) == 0);
  };
  pipeline(kWork / "a");
  pipeline(kWork / "b");
  const auto a = snapshot(kWork / "a"), b = snapshot(kWork / "b");
  CHECK(a.size() == b.size());
  for (const auto& [name, bytes] : a) {
    INFO(name);
    REQUIRE(b.count(name));
    CHECK(b.at(name) == bytes);
  }
  CHECK(a.count("metrics/captions.json"));
  CHECK(a.count("ensemble-caption/captions.jsonl"));
  // Identical members: the ensemble picks the same captions as the single model.
  CHECK(a.at("ensemble-caption/captions.jsonl") == a.at("caption/captions.jsonl"));
}

TEST_CASE("AUDIOCAP_OUT_ROOT places relative outputs") {
  Workdir w;
  const std::string cmd = "AUDIOCAP_OUT_ROOT=" + kWork.string() + " " + AUDIOCAP_CLI + " synth -c " +
                          (kWork / "tiny.cfg").string() + " -o rel >/dev/null 2>&1";
  CHECK(std::system(cmd.c_str()) == 0);
  CHECK(fs::exists(kWork / "rel/data/manifest.jsonl"));
}
