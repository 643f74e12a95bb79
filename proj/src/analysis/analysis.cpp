// Copyright (c) 2026 The MUTE Lab Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "analysis/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "shuffle/shuffle.hpp"

namespace mute::analysis {

Real diversity_score(std::span<const Real> a, std::span<const Real> b) {
  require(a.size() == b.size() && !a.empty(), ErrorKind::Dimension,
          "diversity score needs two vectors of equal, nonzero length");
  double dot = 0, na = 0, nb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += static_cast<double>(a[i]) * b[i];
    na += static_cast<double>(a[i]) * a[i];
    nb += static_cast<double>(b[i]) * b[i];
  }
  require(na > 0 && nb > 0, ErrorKind::Numeric, "diversity score is undefined for a zero vector");
  double cos = dot / (std::sqrt(na) * std::sqrt(nb));
  cos = std::clamp(cos, -1.0, 1.0);
  return static_cast<Real>(std::exp(-cos));
}

const char* category_name(Category c) {
  switch (c) {
    case Category::AttentionWeights: return "attention_weights";
    case Category::AttentionOutput: return "attention_output";
    case Category::FfnOutput: return "ffn_output";
  }
  return "?";
}

Real DiversityReport::score(std::size_t layer, Category c, std::size_t i, std::size_t j) const {
  require(layer < layers && i < units && j < units, ErrorKind::Contract,
          "diversity report index out of range");
  return scores[layer][static_cast<std::size_t>(c)][i * units + j];
}

std::vector<Real> head_averaged(const nn::AttentionTrace& trace, std::size_t batch,
                                std::size_t b, std::size_t query_len, std::size_t key_len) {
  const std::size_t h = trace.heads;
  require(h >= 1 && trace.weights.size() == batch * h * query_len * key_len,
          ErrorKind::Dimension, "attention trace does not match the layout");
  std::vector<Real> out(query_len * key_len, Real(0));
  for (std::size_t head = 0; head < h; ++head) {
    const Real* w = trace.weights.data() + ((b * h + head) * query_len) * key_len;
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += w[i];
  }
  for (auto& v : out) v /= static_cast<Real>(h);
  return out;
}

DiversityReport diversity_from_traces(const std::vector<std::vector<layer::UnitTrace>>& traces,
                                      std::size_t batch, std::size_t seq_len,
                                      const std::vector<std::size_t>& lengths) {
  require(!traces.empty(), ErrorKind::Contract, "no layer traces recorded");
  require(lengths.size() == batch, ErrorKind::Dimension, "one length per sequence required");
  DiversityReport report;
  report.layers = traces.size();
  report.units = traces[0].size();
  const std::size_t units = report.units;
  require(units >= 2, ErrorKind::Contract, "diversity needs at least two units");

  std::size_t positions = 0;
  for (auto len : lengths) {
    require(len >= 1 && len <= seq_len, ErrorKind::Dimension, "sequence length out of range");
    positions += len;
  }

  std::array<double, kCategories> grand{};
  std::size_t grand_count = 0;
  for (std::size_t k = 0; k < traces.size(); ++k) {
    const auto& layer_traces = traces[k];
    require(layer_traces.size() == units, ErrorKind::Dimension,
            "every layer must hold the same number of units");
    std::vector<std::vector<Real>> rows(units);  // head-averaged weights per unit
    const std::size_t d = layer_traces[0].attention_out.dim(1);
    for (std::size_t u = 0; u < units; ++u) {
      const auto& t = layer_traces[u];
      require(t.attention_out.numel() == batch * seq_len * d &&
                  t.ffn_out.numel() == batch * seq_len * d,
              ErrorKind::Dimension, "unit trace does not match the batch layout");
      rows[u].reserve(batch * seq_len * seq_len);
      for (std::size_t b = 0; b < batch; ++b) {
        const auto avg = head_averaged(t.attention, batch, b, seq_len, seq_len);
        rows[u].insert(rows[u].end(), avg.begin(), avg.end());
      }
    }

    std::array<std::vector<Real>, kCategories> mats;
    for (auto& m : mats) m.assign(units * units, Real(std::exp(-1.0)));
    for (std::size_t i = 0; i < units; ++i) {
      for (std::size_t j = i + 1; j < units; ++j) {
        std::array<double, kCategories> sum{};
        for (std::size_t b = 0; b < batch; ++b) {
          for (std::size_t p = 0; p < lengths[b]; ++p) {
            const std::size_t row = b * seq_len + p;
            sum[0] += diversity_score(
                std::span<const Real>(rows[i]).subspan(row * seq_len, seq_len),
                std::span<const Real>(rows[j]).subspan(row * seq_len, seq_len));
            sum[1] += diversity_score(layer_traces[i].attention_out.data().subspan(row * d, d),
                                      layer_traces[j].attention_out.data().subspan(row * d, d));
            sum[2] += diversity_score(layer_traces[i].ffn_out.data().subspan(row * d, d),
                                      layer_traces[j].ffn_out.data().subspan(row * d, d));
          }
        }
        for (std::size_t c = 0; c < kCategories; ++c) {
          const Real mean = static_cast<Real>(sum[c] / static_cast<double>(positions));
          mats[c][i * units + j] = mean;
          mats[c][j * units + i] = mean;
          grand[c] += mean;
        }
        ++grand_count;
      }
    }
    report.scores.push_back(std::move(mats));
  }
  for (std::size_t c = 0; c < kCategories; ++c)
    report.grand_mean[c] = static_cast<Real>(grand[c] / static_cast<double>(grand_count));
  return report;
}

namespace {

struct ProbeTrace {
  model::SeqBatch src;
  std::vector<std::vector<layer::UnitTrace>> traces;
};

ProbeTrace trace_probe(const model::Model& model,
                       const std::vector<std::vector<std::int32_t>>& probe) {
  require(!probe.empty(), ErrorKind::Contract, "empty probe set");
  num::NoGradGuard no_grad;
  ProbeTrace out;
  out.src = model::SeqBatch::sources(probe);
  model::ForwardOptions opts;
  opts.encoder_trace = &out.traces;
  model.encode(out.src, opts);
  return out;
}

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

std::ofstream open_table(const std::filesystem::path& path) {
  std::ofstream os(path, std::ios::trunc);
  require(static_cast<bool>(os), ErrorKind::Io, "cannot write " + path.string());
  return os;
}

}  // namespace

DiversityReport diversity_report(const model::Model& model,
                                 const std::vector<std::vector<std::int32_t>>& probe) {
  require(model.config().units >= 2, ErrorKind::Contract,
          "diversity needs at least two units per layer");
  const ProbeTrace t = trace_probe(model, probe);
  return diversity_from_traces(t.traces, t.src.batch, t.src.len, t.src.lengths);
}

void dump_weights(const model::Model& model, const std::vector<std::vector<std::int32_t>>& probe,
                  const std::string& out_dir, Real threshold) {
  require(threshold >= 0, ErrorKind::Config, "attention threshold must be >= 0");
  const std::filesystem::path out(out_dir);
  std::error_code ec;
  std::filesystem::create_directories(out, ec);
  require(!ec, ErrorKind::Io, "cannot create " + out_dir + ": " + ec.message());

  const auto& layers = model.encoder_layers();
  const std::size_t units = model.config().units;
  {
    auto os = open_table(out / "alphas.tsv");
    os << "layer";
    for (std::size_t u = 1; u <= units; ++u) os << "\tu" << u;
    os << '\n';
    for (std::size_t k = 0; k < layers.size(); ++k) {
      os << k + 1;
      for (Real a : layers[k].alpha.data()) os << '\t' << fmt(a);
      os << '\n';
    }
  }
  for (std::size_t k = 0; k < layers.size(); ++k) {
    if (layers[k].mode != layer::LayerMode::SeqBiased) continue;
    const num::Tensor& m = layers[k].shuffle;
    const Real hard = shuffle::hardness(m);
    const Real pen = shuffle::penalty_value(m.data(), units);
    auto os = open_table(out / ("shuffle_l" + std::to_string(k + 1) + ".tsv"));
    os << "row";
    for (std::size_t c = 1; c <= units; ++c) os << "\tc" << c;
    os << "\thardness\tpenalty\n";
    for (std::size_t r = 0; r < units; ++r) {
      os << r + 1;
      for (std::size_t c = 0; c < units; ++c) os << '\t' << fmt(m.data()[r * units + c]);
      os << '\t' << fmt(hard) << '\t' << fmt(pen) << '\n';
    }
  }

  const ProbeTrace t = trace_probe(model, probe);
  const std::size_t len = t.src.lengths[0];
  for (std::size_t k = 0; k < t.traces.size(); ++k) {
    for (std::size_t u = 0; u < units; ++u) {
      const auto avg =
          head_averaged(t.traces[k][u].attention, t.src.batch, 0, t.src.len, t.src.len);
      auto os = open_table(out / ("attention_u" + std::to_string(u + 1) + "_l" +
                                  std::to_string(k + 1) + ".tsv"));
      os << "query";
      for (std::size_t j = 1; j <= len; ++j) os << "\tk" << j;
      os << '\n';
      for (std::size_t i = 0; i < len; ++i) {
        os << i + 1;
        for (std::size_t j = 0; j < len; ++j) {
          const Real w = avg[i * t.src.len + j];
          os << '\t' << fmt(w < threshold ? Real(0) : w);
        }
        os << '\n';
      }
    }
  }

  if (units < 2) return;
  const DiversityReport rep =
      diversity_from_traces(t.traces, t.src.batch, t.src.len, t.src.lengths);
  auto os = open_table(out / "diversity.tsv");
  os << "layer\tunit_i\tunit_j";
  for (std::size_t c = 0; c < kCategories; ++c) os << '\t' << category_name(Category(c));
  os << '\n';
  for (std::size_t k = 0; k < rep.layers; ++k)
    for (std::size_t i = 0; i < units; ++i)
      for (std::size_t j = i + 1; j < units; ++j) {
        os << k + 1 << '\t' << i + 1 << '\t' << j + 1;
        for (std::size_t c = 0; c < kCategories; ++c)
          os << '\t' << fmt(rep.score(k, Category(c), i, j));
        os << '\n';
      }
  os << "mean\t-\t-";
  for (Real v : rep.grand_mean) os << '\t' << fmt(v);
  os << '\n';
}

}  // namespace mute::analysis
