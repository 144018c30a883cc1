#include <doctest.h>

#include <fstream>
#include <sstream>

#include "helpers.hpp"
#include "ul2r/cli.hpp"

using namespace ul2r;

namespace {

struct Outcome {
    int code;
    std::string out;
    std::string err;
};

Outcome run(const std::vector<std::string>& args) {
    std::ostringstream out, err;
    const int code = run_cli(args, out, err);
    return {code, out.str(), err.str()};
}

std::string slurp(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write(const std::filesystem::path& p, const std::string& s) {
    std::ofstream(p, std::ios::binary) << s;
}

const std::vector<std::string> kTiny{"--set", "d_model=16",     "--set", "n_layers=1", "--set", "n_heads=2",
                                     "--set", "d_ff=32",        "--set", "max_len=64", "--set", "l_in=32",
                                     "--set", "l_tgt=32",       "--set", "pretrain_batch_size=4",
                                     "--set", "ul2r_batch_size=4"};

std::vector<std::string> cat(std::vector<std::string> a, const std::vector<std::string>& b) {
    a.insert(a.end(), b.begin(), b.end());
    return a;
}

} // namespace

TEST_CASE("usage errors exit 2") {
    CHECK(run({}).code == 2);
    CHECK(run({"frobnicate"}).code == 2);
    const Outcome o = run({"config", "--bogus"});
    CHECK(o.code == 2);
    CHECK(o.err.rfind("error: usage:", 0) == 0);
}

TEST_CASE("config prints defaults and honours overrides") {
    const Outcome o = run({"config"});
    CHECK(o.code == 0);
    CHECK(o.out.find("mixture: S=0.5,R=0.25,X=0.25") != std::string::npos);
    CHECK(o.out.find("lr_max: 1e-4") != std::string::npos);
    const Outcome s = run({"--seed", "9", "config", "--set", "lr_max=2e-3"});
    CHECK(s.out.find("lr_max: 0.002") != std::string::npos);
    CHECK(s.out.find("seed: 9") != std::string::npos);
    CHECK(run({"config", "--set", "nonsense=1"}).code == 1);
}

TEST_CASE("corrupt is deterministic and writes a manifest") {
    const auto dir = test::tmp_dir("cli_corrupt");
    std::string text;
    for (int i = 0; i < 10; ++i) text += "document number " + std::to_string(i) + " has some words\n";
    write(dir / "c.txt", text);
    const auto args = [&](const std::string& out) {
        return std::vector<std::string>{"--seed", "7", "corrupt", "--corpus", (dir / "c.txt").string(), "--out",
                                        (dir / out).string(), "--packed-out", (dir / (out + ".packed")).string(),
                                        "--l-in", "48", "--l-tgt", "48"};
    };
    REQUIRE(run(args("a.jsonl")).code == 0);
    REQUIRE(run(args("b.jsonl")).code == 0);
    CHECK(slurp(dir / "a.jsonl") == slurp(dir / "b.jsonl"));
    CHECK(slurp(dir / "a.jsonl.packed") == slurp(dir / "b.jsonl.packed"));
    const std::string manifest = slurp(dir / "a.jsonl.manifest");
    CHECK(manifest.find("seed: 7") != std::string::npos);
    CHECK(manifest.find("config.mixture: S=0.5,R=0.25,X=0.25") != std::string::npos);
    CHECK(manifest.find("input.corpus: ") != std::string::npos);

    const std::string first = slurp(dir / "a.jsonl");
    std::filesystem::remove(dir / "a.jsonl");
    REQUIRE(run({"rerun", "--manifest", (dir / "a.jsonl.manifest").string()}).code == 0);
    CHECK(slurp(dir / "a.jsonl") == first);
}

TEST_CASE("ul2r from a missing checkpoint") {
    const auto dir = test::tmp_dir("cli_missing");
    write(dir / "c.txt", "hello there\n");
    const Outcome o = run({"ul2r", "--from", (dir / "missing.ckpt").string(), "--corpus", (dir / "c.txt").string(),
                           "--out", (dir / "u.ckpt").string()});
    CHECK(o.code == 1);
    CHECK(o.err.find("missing.ckpt") != std::string::npos);
    CHECK(o.err.rfind("error: ", 0) == 0);
}

TEST_CASE("pretrain, ul2r, infill, eval and curve end to end") {
    const auto dir = test::tmp_dir("cli_e2e");
    write(dir / "g.txt", "template: {n} has a {c} hat.\nslot n: ann | bob | cyd\nslot c: red | tan | blue\n");
    REQUIRE(run({"--seed", "2", "synth", "--grammar", (dir / "g.txt").string(), "--out",
                 (dir / "train.txt").string(), "--heldout-out", (dir / "held.txt").string(), "--heldout", "0.3",
                 "--tasks-out", (dir / "tasks.json").string()})
                .code == 0);
    const auto pre = [&](const std::string& name) {
        return cat({"--seed", "3", "pretrain", "--corpus", (dir / "train.txt").string(), "--set", "pretrain_steps=5",
                    "--out", (dir / name).string()},
                   kTiny);
    };
    REQUIRE(run(pre("c.ckpt")).code == 0);
    REQUIRE(run(pre("c2.ckpt")).code == 0);
    CHECK(slurp(dir / "c.ckpt") == slurp(dir / "c2.ckpt"));
    CHECK(slurp(dir / "c.ckpt.metrics.csv") == slurp(dir / "c2.ckpt.metrics.csv"));
    CHECK(slurp(dir / "c.ckpt.metrics.csv").rfind("step,phase,lr,loss,tokens,flops\n", 0) == 0);

    const auto ul = [&](const std::string& name) {
        return cat({"--seed", "3", "ul2r", "--from", (dir / "c.ckpt").string(), "--corpus",
                    (dir / "train.txt").string(), "--set", "ul2r_steps=2", "--out", (dir / name).string()},
                   kTiny);
    };
    REQUIRE(run(ul("u.ckpt")).code == 0);
    REQUIRE(run(ul("u2.ckpt")).code == 0);
    CHECK(slurp(dir / "u.ckpt") == slurp(dir / "u2.ckpt"));

    const Outcome inf = run({"infill", "--ckpt", (dir / "u.ckpt").string(), "--prompt", "ann has a <extra_id_0> hat.",
                             "--mode", "nlu", "--max-tokens", "4"});
    CHECK((inf.code == 0 || inf.err.find("error: parse:") == 0));
    CHECK(run({"generate", "--ckpt", (dir / "u.ckpt").string(), "--prompt", "ann", "--max-tokens", "3"}).code == 0);
    CHECK(run({"infill", "--ckpt", (dir / "u.ckpt").string(), "--prompt", "x", "--mode", "zz"}).code == 2);

    const Outcome ev = run({"eval", "--ckpt", (dir / "u.ckpt").string(), "--tasks", (dir / "tasks.json").string(),
                            "--out", (dir / "eval.csv").string()});
    REQUIRE(ev.code == 0);
    CHECK(slurp(dir / "eval.csv").rfind("task,kind,value,count\n", 0) == 0);

    const Outcome cv = run({"curve", "--ckpt", (dir / "c.ckpt").string(), "--ckpt", (dir / "nope.ckpt").string(),
                            "--ckpt", (dir / "u.ckpt").string(), "--tasks", (dir / "tasks.json").string(), "--out",
                            (dir / "curve.csv").string()});
    REQUIRE(cv.code == 0);
    CHECK(cv.err.find("warning: skipping missing checkpoint") != std::string::npos);
    std::istringstream lines(slurp(dir / "curve.csv"));
    std::string header, r1, r2;
    std::getline(lines, header);
    std::getline(lines, r1);
    std::getline(lines, r2);
    CHECK(header.rfind("label,tokens,flops,", 0) == 0);
    auto flops_of = [](const std::string& row) {
        std::istringstream s(row);
        std::string a, b, c;
        std::getline(s, a, ',');
        std::getline(s, b, ',');
        std::getline(s, c, ',');
        return std::stod(c);
    };
    CHECK(flops_of(r2) > flops_of(r1));
}

TEST_CASE("savings on constructed curves") {
    const auto dir = test::tmp_dir("cli_savings");
    write(dir / "a.csv", "label,tokens,flops,aggregate\na1,1,1000,0.4\na2,2,4000,0.8\n");
    write(dir / "b.csv", "label,tokens,flops,aggregate\nb1,1,500,0.4\nb2,2,2000,0.8\n");
    const Outcome o = run({"savings", "--baseline", (dir / "a.csv").string(), "--treated", (dir / "b.csv").string(),
                           "--quality", "0.6"});
    CHECK(o.code == 0);
    CHECK(o.out == "2.00\n");
    const Outcome ex = run({"savings", "--baseline", (dir / "a.csv").string(), "--treated", (dir / "b.csv").string(),
                            "--quality", "0.9"});
    CHECK(ex.code == 1);
    CHECK(ex.err.find("error: extrapolation") == 0);
}
