// SPDX-License-Identifier: Apache-2.0

#include "trajdiff/masked_attention.hpp"

#include <cmath>
#include <string>

#include "trajdiff/errors.hpp"

namespace trajdiff {

MaskMode parse_mask_mode(std::string_view name) {
  if (name == "additive") return MaskMode::kAdditive;
  if (name == "multiplicative") return MaskMode::kMultiplicative;
  throw ConfigError("unknown mask mode '" + std::string(name) + "'");
}

std::string_view to_string(MaskMode mode) {
  return mode == MaskMode::kAdditive ? "additive" : "multiplicative";
}

AttentionInputs AttentionInputs::make(Eigen::MatrixXd q, Eigen::MatrixXd k, Eigen::MatrixXd v) {
  AttentionInputs in{std::move(q), std::move(k), std::move(v), 1.0};
  if (in.q.cols() > 0) in.scale = 1.0 / std::sqrt(static_cast<double>(in.q.cols()));
  return in;
}

void AttentionInputs::validate() const {
  if (q.cols() < 1 || q.rows() < 1 || k.rows() < 1)
    throw ShapeError("attention needs d >= 1 and at least one query and key");
  if (k.cols() != q.cols()) throw ShapeError("attention: query/key width mismatch");
  if (v.rows() != k.rows()) throw ShapeError("attention: key/value count mismatch");
  if (!q.allFinite() || !k.allFinite() || !v.allFinite())
    throw NumericError("attention: non-finite inputs");
}

Eigen::MatrixXd attention_weights(const AttentionInputs& in, const BinaryMatrix* mask,
                                  MaskMode mode) {
  in.validate();
  Eigen::MatrixXd logits = (in.q * in.k.transpose()) * in.scale;
  if (mask) {
    if (mask->rows() != logits.rows() || mask->cols() != logits.cols())
      throw ShapeError("attention: mask shape does not match logits");
    if (mode == MaskMode::kAdditive) {
      for (Eigen::Index i = 0; i < logits.rows(); ++i) {
        bool any = false;
        for (Eigen::Index j = 0; j < logits.cols(); ++j) {
          if ((*mask)(i, j) == 0)
            logits(i, j) = kMaskedLogit;
          else
            any = true;
        }
        if (!any)
          throw DegenerateError("attention: mask row " + std::to_string(i) +
                                " excludes every key");
      }
    } else {
      logits.array() *= mask->cast<double>().array();
    }
  }
  for (Eigen::Index i = 0; i < logits.rows(); ++i) {
    const double peak = logits.row(i).maxCoeff();
    logits.row(i) = (logits.row(i).array() - peak).exp().matrix();
    logits.row(i) /= logits.row(i).sum();
  }
  return logits;
}

Eigen::MatrixXd attention(const AttentionInputs& in, const BinaryMatrix* mask, MaskMode mode) {
  return attention_weights(in, mask, mode) * in.v;
}

AttentionPair attention_pair(const AttentionInputs& in, const BinaryMatrix& mask,
                             MaskMode mode) {
  return {attention(in, &mask, mode), attention(in, nullptr, mode)};
}

}  // namespace trajdiff
