#include "story/attention.hpp"

#include <cmath>

#include "story/error.hpp"

namespace story {
namespace {

void check_shapes(const Matrix& regions, const Vector& h_prev, const AttentionParams& p) {
  if (regions.rows() == 0) throw Error(ErrorCode::empty_input, "attention over zero regions");
  const std::size_t d_att = p.bias.size();
  if (p.region_proj.rows() != d_att || p.region_proj.cols() != regions.cols() || p.hidden_proj.rows() != d_att ||
      p.hidden_proj.cols() != h_prev.size() || p.score.rows() != 1 || p.score.cols() != d_att) {
    throw Error(ErrorCode::dimension_mismatch,
                "attention: regions " + shape_string(regions) + ", h_prev length " + std::to_string(h_prev.size()) +
                    ", region_proj " + shape_string(p.region_proj) + ", hidden_proj " + shape_string(p.hidden_proj) +
                    ", bias length " + std::to_string(d_att) + ", score " + shape_string(p.score));
  }
}

}  // namespace

Matrix project_regions(const Matrix& regions, const AttentionParams& p) {
  if (p.region_proj.cols() != regions.cols() || p.region_proj.rows() != p.bias.size()) {
    throw Error(ErrorCode::dimension_mismatch,
                "project_regions: regions " + shape_string(regions) + ", region_proj " + shape_string(p.region_proj));
  }
  Matrix out(regions.rows(), p.bias.size());
  for (std::size_t i = 0; i < regions.rows(); ++i) {
    auto row = out.row(i);
    add_to(row, p.bias.values());
    add_matvec(p.region_proj, regions.row(i), row);
  }
  return out;
}

AttentionStep attend(const Matrix& regions, const Matrix& projected, const Vector& h_prev, const AttentionParams& p) {
  check_shapes(regions, h_prev, p);
  const std::size_t m = regions.rows();
  const std::size_t d_att = p.bias.size();

  Vector from_hidden(d_att);
  add_matvec(p.hidden_proj, h_prev.values(), from_hidden.values());

  AttentionStep step;
  step.activations = Matrix(m, d_att);
  Vector scores(m);
  const auto score_row = p.score.row(0);
  for (std::size_t i = 0; i < m; ++i) {
    auto act = step.activations.row(i);
    const auto proj = projected.row(i);
    double e = 0.0;
    for (std::size_t a = 0; a < d_att; ++a) {
      act[a] = std::tanh(proj[a] + from_hidden[a]);
      e += score_row[a] * act[a];
    }
    scores[i] = e;
  }
  step.weights.k = softmax(scores);
  step.context = context_vector(regions, step.weights);
  return step;
}

AttentionWeights attention_scores(const Matrix& regions, const Vector& h_prev, const AttentionParams& p) {
  check_shapes(regions, h_prev, p);
  return attend(regions, project_regions(regions, p), h_prev, p).weights;
}

Vector context_vector(const Matrix& regions, const AttentionWeights& weights) {
  if (weights.k.size() != regions.rows()) {
    throw Error(ErrorCode::dimension_mismatch, "context_vector: " + std::to_string(weights.k.size()) +
                                                   " weights for regions " + shape_string(regions));
  }
  Vector v(regions.cols());
  for (std::size_t i = 0; i < regions.rows(); ++i) {
    const double k = weights.k[i];
    const auto row = regions.row(i);
    for (std::size_t d = 0; d < v.size(); ++d) v[d] += k * row[d];
  }
  return v;
}

void attend_backward(const Matrix& regions, const Vector& h_prev, const AttentionStep& step,
                     std::span<const double> dcontext, const AttentionParams& p, AttentionParams& grads,
                     std::span<double> dh_prev, BackwardFault fault) {
  const std::size_t m = regions.rows();
  const std::size_t d_att = p.bias.size();
  const Vector& k = step.weights.k;

  Vector dk(m);
  double weighted = 0.0;
  for (std::size_t i = 0; i < m; ++i) {
    const auto row = regions.row(i);
    double acc = 0.0;
    for (std::size_t d = 0; d < row.size(); ++d) acc += dcontext[d] * row[d];
    dk[i] = acc;
    weighted += k[i] * acc;
  }

  const auto score_row = p.score.row(0);
  auto dscore = grads.score.row(0);
  Vector dpre(d_att);
  Vector dpre_total(d_att);
  for (std::size_t i = 0; i < m; ++i) {
    const double de = fault == BackwardFault::attention ? dk[i] : k[i] * (dk[i] - weighted);
    if (de == 0.0) continue;
    const auto act = step.activations.row(i);
    for (std::size_t a = 0; a < d_att; ++a) {
      dscore[a] += de * act[a];
      dpre[a] = de * score_row[a] * tanh_grad(act[a], fault);
    }
    add_outer(grads.region_proj, dpre.values(), regions.row(i));
    add_to(dpre_total.values(), dpre.values());
  }
  add_to(grads.bias.values(), dpre_total.values());
  add_outer(grads.hidden_proj, dpre_total.values(), h_prev.values());
  add_matvec_transposed(p.hidden_proj, dpre_total.values(), dh_prev);
}

}  // namespace story
