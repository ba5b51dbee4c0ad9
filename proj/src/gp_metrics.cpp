#include <cmath>
#include <cstdio>

#include "bartr/error.hpp"
#include "bartr/gp.hpp"
#include "bartr/random.hpp"

namespace bartr {

ClassificationMetrics classification_metrics(const GPClassifier& model, std::span<const Point3> inputs,
                                             std::span<const int> labels) {
  if (inputs.empty()) throw ValidationError("classification_metrics: empty evaluation set");
  if (inputs.size() != labels.size()) throw ValidationError("classification_metrics: size mismatch");
  const Eigen::VectorXd p = model.predict(inputs);
  double correct = 0.0;
  double nll = 0.0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const double pi = p(static_cast<Eigen::Index>(i));
    const int predicted = pi >= 0.5 ? 1 : -1;
    if (predicted == labels[i]) correct += 1.0;
    nll -= labels[i] == 1 ? std::log(pi) : std::log1p(-pi);
  }
  const auto n = static_cast<double>(labels.size());
  return {correct / n, nll / n};
}

RegressionMetrics regression_metrics(const GPRegressor& model, std::span<const Point3> inputs,
                                     std::span<const double> targets) {
  if (inputs.empty()) throw ValidationError("regression_metrics: empty evaluation set");
  if (inputs.size() != targets.size()) throw ValidationError("regression_metrics: size mismatch");
  const auto pred = model.predict(inputs);
  double sq = 0.0;
  double max_err = 0.0;
  for (std::size_t i = 0; i < targets.size(); ++i) {
    const double e = pred.mean(static_cast<Eigen::Index>(i)) - targets[i];
    sq += e * e;
    max_err = std::max(max_err, std::abs(e));
  }
  return {sq / static_cast<double>(targets.size()), max_err};
}

std::uint64_t training_digest(std::span<const Point3> inputs, std::span<const double> targets) {
  std::uint64_t h = fnv1a(nullptr, 0);
  for (const auto& p : inputs) {
    const double v[3] = {p.x, p.y, p.z};
    h = fnv1a(v, sizeof v, h);
  }
  for (double t : targets) h = fnv1a(&t, sizeof t, h);
  return h;
}

namespace {

std::string hex_digest(std::uint64_t digest) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(digest));
  return buf;
}

nlohmann::ordered_json model_doc(const char* type, const KernelExpr& kernel, const Hyperparams& theta,
                                 std::size_t n, std::uint64_t digest) {
  nlohmann::ordered_json doc;
  doc["type"] = type;
  doc["kernel"] = kernel_name(kernel);
  doc["theta"] = theta.log_values();
  doc["n"] = n;
  doc["digest"] = hex_digest(digest);
  return doc;
}

void check_doc(const nlohmann::ordered_json& doc, const char* type, std::uint64_t digest) {
  if (!doc.is_object() || doc.value("type", "") != type) {
    throw ValidationError(std::string("model document is not a ") + type);
  }
  if (doc.at("digest").get<std::string>() != hex_digest(digest)) {
    throw ValidationError("model document digest does not match the supplied training data");
  }
}

std::vector<double> as_doubles(std::span<const int> labels) { return {labels.begin(), labels.end()}; }

}  // namespace

nlohmann::ordered_json to_json(const GPRegressor& model) {
  return model_doc("regressor", model.kernel(), model.hyperparams(), model.inputs().size(),
                   training_digest(model.inputs(), model.targets()));
}

nlohmann::ordered_json to_json(const GPClassifier& model) {
  return model_doc("classifier", model.kernel(), model.hyperparams(), model.inputs().size(),
                   training_digest(model.inputs(), as_doubles(model.labels())));
}

GPRegressor regressor_from_json(const nlohmann::ordered_json& doc, std::vector<Point3> inputs,
                                std::vector<double> targets) {
  check_doc(doc, "regressor", training_digest(inputs, targets));
  return GPRegressor::condition(parse_kernel(doc.at("kernel").get<std::string>()),
                                Hyperparams::from_log(doc.at("theta").get<std::vector<double>>()),
                                std::move(inputs), std::move(targets));
}

GPClassifier classifier_from_json(const nlohmann::ordered_json& doc, std::vector<Point3> inputs,
                                  std::vector<int> labels) {
  check_doc(doc, "classifier", training_digest(inputs, as_doubles(labels)));
  return GPClassifier::condition(parse_kernel(doc.at("kernel").get<std::string>()),
                                 Hyperparams::from_log(doc.at("theta").get<std::vector<double>>()),
                                 std::move(inputs), std::move(labels));
}

}  // namespace bartr
