// SPDX-License-Identifier: Apache-2.0
#pragma once

// Runs every seeded CLI subcommand through the real binary inside a scratch
// directory and collects each produced file, stdout included.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <vector>

namespace layerlens::pipeline {

using Files = std::map<std::string, std::vector<char>>;

inline const char* kConfig = R"({
  "model": {"d_model": 16, "n_heads": 2, "d_ff": 32, "n_layers": 2, "max_seq_len": 40},
  "vocab_max_size": 80,
  "pretrain": {"steps": 40, "batch_size": 8, "eval_every": 20},
  "finetune": {"epochs": 1, "batch_size": 16, "max_seq_len": 40}
})";

inline const std::vector<std::string>& commands() {
    static const std::vector<std::string> c{
        "gen-corpus --what corpus --n 300 --seed 1 --out corpus.txt",
        "gen-corpus --what classification --n 160 --seed 2 --out cls_train.jsonl",
        "gen-corpus --what classification --n 40 --seed 3 --out cls_dev.jsonl",
        "gen-corpus --what span --n 80 --seed 4 --out span.jsonl",
        "pretrain --config cfg.json --corpus corpus.txt --seed 5 --out base.ckpt --metrics pretrain.jsonl",
        "probe --ckpt base.ckpt --input corpus.txt --decodes --deepen-depths 2,3,4 --out probe.json",
        "deepen --ckpt base.ckpt --layers 3 --plan plan.json --out deep.ckpt",
        "finetune --config cfg.json --ckpt base.ckpt --train cls_train.jsonl --dev cls_dev.jsonl --seeds 1,2 "
        "--metrics finetune.json --out cls.ckpt",
        "finetune --config cfg.json --ckpt deep.ckpt --train span.jsonl --seed 6 --out span.ckpt",
        "eval --config cfg.json --ckpt cls.seed1.ckpt --data cls_dev.jsonl --out eval.json",
        "eval --config cfg.json --ckpt span.ckpt --data span.jsonl --threshold 0.5 --out eval_span.json",
        "ensemble --config cfg.json --ckpts cls.seed1.ckpt,cls.seed2.ckpt --data cls_dev.jsonl --out ensemble.json",
        "sweep --config cfg.json --ckpt base.ckpt --train cls_train.jsonl --dev cls_dev.jsonl --depths 2,3,4 "
        "--seeds 1,2 --out sweep.json",
    };
    return c;
}

/// Returns the produced files, or an empty map with `failed` set to the
/// first command that exited nonzero.
inline Files run(const std::string& binary, const std::filesystem::path& dir, std::string* failed = nullptr) {
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    std::ofstream(dir / "cfg.json") << kConfig;
    for (std::size_t i = 0; i < commands().size(); ++i) {
        const std::string line = "cd '" + dir.string() + "' && '" + binary + "' " + commands()[i] + " > stdout." +
                                 std::to_string(i) + ".txt 2>> stderr.txt";
        if (std::system(line.c_str()) != 0) {
            if (failed) *failed = commands()[i];
            return {};
        }
    }
    Files out;
    for (const auto& entry : std::filesystem::directory_iterator(dir)) {
        std::ifstream in(entry.path(), std::ios::binary);
        out[entry.path().filename().string()] =
            std::vector<char>(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
    }
    return out;
}

}  // namespace layerlens::pipeline
