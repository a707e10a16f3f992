#include "tablemetric/svm.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

#include "tablemetric/corpus.hpp"

namespace tablemetric {

using nlohmann::json;

void TfidfFeaturizer::fit(
    const std::vector<std::vector<std::string>>& documents) {
  tokens_.clear();
  column_.clear();
  std::vector<int> df;
  for (const auto& doc : documents) {
    std::set<std::string> seen;
    for (const auto& tok : doc) seen.insert(tok);
    for (const auto& tok : seen) {
      auto it = column_.find(tok);
      if (it == column_.end()) {
        column_.emplace(tok, static_cast<int>(tokens_.size()));
        tokens_.push_back(tok);
        df.push_back(1);
      } else {
        ++df[static_cast<std::size_t>(it->second)];
      }
    }
  }
  const Real n = static_cast<Real>(documents.size());
  idf_ = Vec::Zero(static_cast<int>(tokens_.size()));
  for (int j = 0; j < idf_.size(); ++j)
    idf_[j] =
        std::log((1.0 + n) / (1.0 + static_cast<Real>(df[static_cast<std::size_t>(j)]))) +
        1.0;
  fitted_ = true;
}

Vec TfidfFeaturizer::transform(const std::vector<std::string>& tokens) const {
  if (!fitted_)
    throw std::logic_error("TfidfFeaturizer: transform called before fit");
  Vec out = Vec::Zero(dim());
  for (const auto& tok : tokens) {
    auto it = column_.find(tok);
    if (it != column_.end()) out[it->second] += 1.0;
  }
  out = out.cwiseProduct(idf_);
  const Real norm = out.norm();
  if (norm > 0.0) out /= norm;
  return out;
}

TfidfFeaturizer TfidfFeaturizer::from_state(
    const std::vector<std::string>& tokens, const Vec& idf) {
  if (static_cast<int>(tokens.size()) != idf.size())
    throw std::invalid_argument("TfidfFeaturizer: token/idf size mismatch");
  TfidfFeaturizer f;
  f.tokens_ = tokens;
  for (std::size_t j = 0; j < tokens.size(); ++j)
    f.column_.emplace(tokens[j], static_cast<int>(j));
  f.idf_ = idf;
  f.fitted_ = true;
  return f;
}

namespace {

// Dual coordinate descent for min_w 0.5|w|^2 + c * sum hinge(y_i w.x_i),
// sweeping coordinates in index order every epoch. x rows already carry the
// bias feature.
Vec train_binary(const std::vector<Vec>& x, const std::vector<Real>& y,
                 const SvmConfig& cfg) {
  const std::size_t n = x.size();
  const int dim = static_cast<int>(x.front().size());
  Vec w = Vec::Zero(dim);
  std::vector<Real> alpha(n, 0.0);
  std::vector<Real> qii(n);
  for (std::size_t i = 0; i < n; ++i) qii[i] = x[i].squaredNorm();

  for (int epoch = 0; epoch < cfg.max_epochs; ++epoch) {
    Real max_violation = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const Real g = y[i] * w.dot(x[i]) - 1.0;
      Real pg = g;
      if (alpha[i] <= 0.0) pg = std::min(g, 0.0);
      if (alpha[i] >= cfg.c) pg = std::max(g, 0.0);
      max_violation = std::max(max_violation, std::abs(pg));
      if (std::abs(pg) < 1e-12 || qii[i] <= 0.0) continue;
      const Real next =
          std::min(std::max(alpha[i] - g / qii[i], 0.0), cfg.c);
      w += (next - alpha[i]) * y[i] * x[i];
      alpha[i] = next;
    }
    if (max_violation < cfg.tol) break;
  }
  return w;
}

Vec with_bias(const Vec& x) {
  Vec out(x.size() + 1);
  out.head(x.size()) = x;
  out[x.size()] = 1.0;
  return out;
}

}  // namespace

void LinearSvm::fit(const std::vector<Vec>& features,
                    const std::vector<std::string>& labels) {
  if (features.empty() || features.size() != labels.size())
    throw std::invalid_argument("LinearSvm: need matching non-empty inputs");
  if (cfg_.kernel != "linear")
    throw std::invalid_argument("LinearSvm: unsupported kernel " +
                                cfg_.kernel);

  std::set<std::string> unique(labels.begin(), labels.end());
  labels_.assign(unique.begin(), unique.end());

  std::vector<Vec> x;
  x.reserve(features.size());
  for (const auto& f : features) x.push_back(with_bias(f));

  weights_.clear();
  if (labels_.size() == 1) {
    // Degenerate but legal: the decision is a constant +1 vote.
    weights_.push_back(Vec::Zero(x.front().size()));
    return;
  }
  for (const auto& cls : labels_) {
    std::vector<Real> y;
    y.reserve(labels.size());
    for (const auto& l : labels) y.push_back(l == cls ? 1.0 : -1.0);
    weights_.push_back(train_binary(x, y, cfg_));
  }
}

Vec LinearSvm::decision(const Vec& x) const {
  if (!fitted()) throw std::logic_error("LinearSvm: predict before fit");
  const Vec xb = with_bias(x);
  Vec out(static_cast<int>(weights_.size()));
  for (std::size_t k = 0; k < weights_.size(); ++k)
    out[static_cast<int>(k)] = weights_[k].dot(xb);
  return out;
}

const std::string& LinearSvm::predict(const Vec& x) const {
  const Vec scores = decision(x);
  int best = 0;
  for (int k = 1; k < scores.size(); ++k)
    if (scores[k] > scores[best]) best = k;
  return labels_[static_cast<std::size_t>(best)];
}

LinearSvm LinearSvm::from_state(const SvmConfig& config,
                                const std::vector<std::string>& labels,
                                const std::vector<Vec>& weights) {
  if (labels.size() != weights.size() || labels.empty())
    throw std::invalid_argument("LinearSvm: label/weight size mismatch");
  LinearSvm svm(config);
  svm.labels_ = labels;
  svm.weights_ = weights;
  return svm;
}

namespace {

std::string axis_level_label(Location loc, int level) {
  return (loc == Location::kRowHeader ? "rh:" : "ch:") +
         std::to_string(level);
}

std::string location_label(const TableInstance& t) {
  if (t.target.location == Location::kOutOfHeader) return "none";
  return axis_level_label(t.target.location, *t.target.level);
}

std::vector<std::string> header_tokens(const TableInstance& t) {
  std::vector<std::string> out;
  for (const auto* axis : {&t.row_headers, &t.column_headers})
    for (const auto& level : *axis)
      for (const auto& name : level)
        for (const auto& tok : tokenize(name)) out.push_back(tok);
  return out;
}

}  // namespace

void SvmBaseline::fit(const std::vector<TableInstance>& train) {
  if (train.empty())
    throw std::invalid_argument("SvmBaseline: empty train set");

  std::vector<std::vector<std::string>> header_docs, caption_docs;
  std::vector<std::string> loc_labels, tok_labels;
  for (const auto& t : train) {
    header_docs.push_back(header_tokens(t));
    caption_docs.push_back(t.caption);
    loc_labels.push_back(location_label(t));
    tok_labels.push_back(normalize_token(t.target.tokens.front()));
  }
  header_features_.fit(header_docs);
  caption_features_.fit(caption_docs);

  std::vector<Vec> loc_x, tok_x;
  for (const auto& t : train) {
    loc_x.push_back(header_features_.transform(header_tokens(t)));
    tok_x.push_back(caption_features_.transform(t.caption));
  }
  location_.fit(loc_x, loc_labels);
  token_.fit(tok_x, tok_labels);
}

Prediction SvmBaseline::predict(const TableInstance& table) const {
  if (!fitted()) throw std::logic_error("SvmBaseline: predict before fit");

  const Vec scores = location_.decision(
      header_features_.transform(header_tokens(table)));
  const auto& labels = location_.labels();

  auto feasible = [&](const std::string& label) {
    if (label == "none") return true;
    const bool row = label.rfind("rh:", 0) == 0;
    const int level = std::stoi(label.substr(3));
    const int depth =
        row ? table.level_count_rows() : table.level_count_cols();
    return level >= 1 && level <= depth;
  };

  int best = -1;
  for (int k = 0; k < scores.size(); ++k) {
    if (!feasible(labels[static_cast<std::size_t>(k)])) continue;
    if (best < 0 || scores[k] > scores[best]) best = k;
  }
  const std::string choice =
      best < 0 ? std::string("none") : labels[static_cast<std::size_t>(best)];

  Prediction pred;
  if (choice != "none") {
    const bool row = choice.rfind("rh:", 0) == 0;
    const int level = std::stoi(choice.substr(3));
    pred.cls = row ? PredClass::kLRow : PredClass::kLCol;
    pred.level = level;
    pred.tokens = row ? table.row_headers[static_cast<std::size_t>(level - 1)]
                      : table.column_headers[static_cast<std::size_t>(level - 1)];
    return pred;
  }

  pred.cls = PredClass::kGen;
  const std::string& tok =
      token_.predict(caption_features_.transform(table.caption));
  pred.tokens.assign(static_cast<std::size_t>(std::max(1, table.n_cols())),
                     tok);
  return pred;
}

namespace {

json featurizer_json(const TfidfFeaturizer& f) {
  json out;
  out["tokens"] = f.tokens();
  out["idf"] = std::vector<Real>(f.idf().data(), f.idf().data() + f.idf().size());
  return out;
}

TfidfFeaturizer featurizer_from_json(const json& j) {
  std::vector<std::string> tokens = j.at("tokens").get<std::vector<std::string>>();
  std::vector<Real> idf = j.at("idf").get<std::vector<Real>>();
  Vec v = Eigen::Map<const Vec>(idf.data(), static_cast<int>(idf.size()));
  return TfidfFeaturizer::from_state(tokens, v);
}

json svm_json(const LinearSvm& svm) {
  json out;
  out["labels"] = svm.labels();
  json ws = json::array();
  for (const auto& w : svm.weights())
    ws.push_back(std::vector<Real>(w.data(), w.data() + w.size()));
  out["weights"] = ws;
  return out;
}

LinearSvm svm_from_json(const SvmConfig& cfg, const json& j) {
  std::vector<std::string> labels =
      j.at("labels").get<std::vector<std::string>>();
  std::vector<Vec> weights;
  for (const auto& row : j.at("weights")) {
    std::vector<Real> vals = row.get<std::vector<Real>>();
    weights.push_back(
        Eigen::Map<const Vec>(vals.data(), static_cast<int>(vals.size())));
  }
  return LinearSvm::from_state(cfg, labels, weights);
}

}  // namespace

std::string SvmBaseline::to_json_string() const {
  json out;
  out["config"] = {{"c", cfg_.c},
                   {"kernel", cfg_.kernel},
                   {"max_epochs", cfg_.max_epochs},
                   {"tol", cfg_.tol}};
  out["header_features"] = featurizer_json(header_features_);
  out["caption_features"] = featurizer_json(caption_features_);
  out["location"] = svm_json(location_);
  out["token"] = svm_json(token_);
  return out.dump(2);
}

SvmBaseline SvmBaseline::from_json_string(const std::string& text) {
  json j = json::parse(text);
  SvmConfig cfg;
  cfg.c = j.at("config").at("c").get<Real>();
  cfg.kernel = j.at("config").at("kernel").get<std::string>();
  cfg.max_epochs = j.at("config").at("max_epochs").get<int>();
  cfg.tol = j.at("config").at("tol").get<Real>();

  SvmBaseline model(cfg);
  model.header_features_ = featurizer_from_json(j.at("header_features"));
  model.caption_features_ = featurizer_from_json(j.at("caption_features"));
  model.location_ = svm_from_json(cfg, j.at("location"));
  model.token_ = svm_from_json(cfg, j.at("token"));
  return model;
}

void SvmBaseline::save(const std::string& path) const {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("SvmBaseline: cannot write " + path);
  out << to_json_string() << '\n';
}

SvmBaseline SvmBaseline::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("SvmBaseline: cannot read " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return from_json_string(buf.str());
}

}  // namespace tablemetric
