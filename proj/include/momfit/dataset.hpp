#pragma once

#include <Eigen/Core>
#include <memory>
#include <stdexcept>
#include <utility>

#include "momfit/polynomial.hpp"

namespace momfit {

// finite point cloud, one point per row
template <typename Scalar>
struct Dataset {
  Mat<Scalar> points;

  Dataset() = default;
  explicit Dataset(Mat<Scalar> pts) : points(std::move(pts)) {}

  Eigen::Index size() const { return points.rows(); }
  Eigen::Index dim() const { return points.cols(); }
  auto point(Eigen::Index i) const { return points.row(i).transpose(); }
};

// probability measure with finite support: weights over the rows of a shared
// dataset.  weights are positive and sum to one.
template <typename Scalar>
struct EmpiricalMeasure {
  std::shared_ptr<const Dataset<Scalar>> dataset;
  Vec<Scalar> weights;

  Eigen::Index size() const { return weights.size(); }
  Eigen::Index dim() const { return dataset->dim(); }

  void validate() const {
    if (!dataset) throw std::invalid_argument("EmpiricalMeasure: null dataset");
    if (weights.size() != dataset->size())
      throw std::invalid_argument("EmpiricalMeasure: weight count != point count");
    if (dataset->size() == 0)
      throw std::invalid_argument("EmpiricalMeasure: empty support");
    if ((weights.array() <= Scalar(0)).any())
      throw std::invalid_argument("EmpiricalMeasure: weights must be positive");
  }
};

template <typename Scalar>
EmpiricalMeasure<Scalar> uniform_measure(std::shared_ptr<const Dataset<Scalar>> data) {
  if (!data || data->size() == 0)
    throw std::invalid_argument("uniform_measure: empty dataset");
  EmpiricalMeasure<Scalar> m;
  m.dataset = std::move(data);
  m.weights = Vec<Scalar>::Constant(m.dataset->size(), Scalar(1) / Scalar(m.dataset->size()));
  return m;
}

template <typename Scalar>
EmpiricalMeasure<Scalar> uniform_measure(Dataset<Scalar> data) {
  return uniform_measure(std::shared_ptr<const Dataset<Scalar>>(
      std::make_shared<Dataset<Scalar>>(std::move(data))));
}

}  // namespace momfit
