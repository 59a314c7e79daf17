#pragma once

#include <string>
#include <utility>
#include <vector>

#include "paramask/data.hpp"
#include "paramask/training.hpp"

// Experiment configuration files: one JSON document with optional sections
// "model", "train", "loss", "synth", "tune" plus top-level "labels" and
// "vocab_min_freq". Unknown keys anywhere are rejected so typos cannot
// silently fall back to defaults.

namespace paramask::config {

struct FileConfig {
  training::TrainConfig train;  // carries the model and loss sections
  data::SynthConfig synth;
  std::size_t vocab_min_freq = 1;
  std::string labels = "articles";  // or "synth:<n>"
  std::vector<std::pair<std::string, std::vector<double>>> grids;  // tuning order
  double tune_tolerance = 0.01;
};

// Parses the file; throws UserError naming the offending key or value.
FileConfig load_config(const std::string& path);

// Same, from an in-memory document (exposed for tests).
FileConfig parse_config(const std::string& text, const std::string& origin);

// "articles" -> the Convention article set; "synth:<n>" -> A1..An.
std::vector<std::string> resolve_labels(const std::string& spec);

model::ParagraphEncoder parse_encoder(const std::string& name);  // "mean"/"transformer"
losses::GVariant parse_variant(const std::string& name);         // "loss"/"prob"/"repr"

}  // namespace paramask::config
