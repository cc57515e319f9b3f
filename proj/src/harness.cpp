#include "ngvi/harness.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <initializer_list>
#include <map>
#include <sstream>
#include <thread>

#include "ngvi/errors.hpp"

namespace ngvi {

namespace {

constexpr std::uint64_t kInitSalt = 0x696e697476696e67ull;

std::string fmt17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string join_path(const std::string& prefix, const std::string& key) {
  return prefix.empty() ? key : prefix + "." + key;
}

// Accumulates violations; fetch helpers record a message and return nullopt
// when a field is missing or has the wrong JSON type, so every problem in the
// document surfaces in one pass.
struct Checker {
  std::vector<std::string> errs;

  void fail(const std::string& path, const std::string& what) {
    errs.push_back(path + " " + what);
  }

  const Json* object(const Json& parent, const std::string& prefix, const char* key,
                     bool required) {
    const std::string path = join_path(prefix, key);
    if (!parent.contains(key)) {
      if (required) fail(path, "is required");
      return nullptr;
    }
    if (!parent[key].is_object()) {
      fail(path, "must be an object");
      return nullptr;
    }
    return &parent[key];
  }

  std::optional<double> number(const Json& parent, const std::string& prefix, const char* key,
                               bool required) {
    const std::string path = join_path(prefix, key);
    if (!parent.contains(key)) {
      if (required) fail(path, "is required");
      return std::nullopt;
    }
    if (!parent[key].is_number()) {
      fail(path, "must be a number");
      return std::nullopt;
    }
    return parent[key].get<double>();
  }

  std::optional<long> integer(const Json& parent, const std::string& prefix, const char* key,
                              bool required) {
    const std::string path = join_path(prefix, key);
    if (!parent.contains(key)) {
      if (required) fail(path, "is required");
      return std::nullopt;
    }
    if (!parent[key].is_number_integer() && !parent[key].is_number_unsigned()) {
      fail(path, "must be an integer");
      return std::nullopt;
    }
    return parent[key].get<long>();
  }

  std::optional<std::string> str(const Json& parent, const std::string& prefix, const char* key,
                                 bool required) {
    const std::string path = join_path(prefix, key);
    if (!parent.contains(key)) {
      if (required) fail(path, "is required");
      return std::nullopt;
    }
    if (!parent[key].is_string()) {
      fail(path, "must be a string");
      return std::nullopt;
    }
    return parent[key].get<std::string>();
  }

  std::optional<bool> boolean(const Json& parent, const std::string& prefix, const char* key,
                              bool required) {
    const std::string path = join_path(prefix, key);
    if (!parent.contains(key)) {
      if (required) fail(path, "is required");
      return std::nullopt;
    }
    if (!parent[key].is_boolean()) {
      fail(path, "must be a boolean");
      return std::nullopt;
    }
    return parent[key].get<bool>();
  }

  void known_keys(const Json& obj, const std::string& prefix,
                  std::initializer_list<const char*> allowed) {
    for (const auto& item : obj.items()) {
      bool ok = false;
      for (const char* k : allowed) {
        if (item.key() == k) {
          ok = true;
          break;
        }
      }
      if (!ok) fail(join_path(prefix, item.key()), "is not a recognized key");
    }
  }
};

std::optional<FamilyKind> family_kind_from(const std::string& s) {
  if (s == "gaussian_full") return FamilyKind::GaussianFull;
  if (s == "gaussian_diag") return FamilyKind::GaussianDiag;
  if (s == "gaussian_diag_centered") return FamilyKind::GaussianDiagCentered;
  return std::nullopt;
}

std::optional<EstimatorKind> estimator_from(const std::string& s) {
  if (s == "bonnet_price") return EstimatorKind::BonnetPrice;
  if (s == "subsample") return EstimatorKind::Subsample;
  if (s == "exact") return EstimatorKind::Exact;
  return std::nullopt;
}

bool conjugate_model_name(const std::string& s) { return s == "gaussian" || s == "blr"; }

// Shape-level checks for a {mu, sigma} document against a family; the
// positive-definiteness of a full sigma is left to compile(), which constructs
// the actual parameter.
void check_moments_doc(Checker& v, const Json& j, const std::string& prefix,
                       std::optional<FamilyKind> kind, int dim) {
  v.known_keys(j, prefix, {"mu", "sigma"});
  if (j.contains("mu")) {
    const std::string path = join_path(prefix, "mu");
    if (!j["mu"].is_array()) {
      v.fail(path, "must be an array of numbers");
    } else {
      const Json& mu = j["mu"];
      if (dim > 0 && static_cast<int>(mu.size()) != dim) {
        v.fail(path, "must have family.dim entries");
      }
      bool all_num = true;
      bool all_zero = true;
      for (const auto& x : mu) {
        if (!x.is_number()) all_num = false;
        else if (x.get<double>() != 0.0) all_zero = false;
      }
      if (!all_num) v.fail(path, "must contain numbers only");
      if (all_num && kind && *kind == FamilyKind::GaussianDiagCentered && !all_zero) {
        v.fail(path, "must be zero for the centered family");
      }
    }
  }
  const std::string spath = join_path(prefix, "sigma");
  if (!j.contains("sigma")) {
    v.fail(spath, "is required");
    return;
  }
  const Json& s = j["sigma"];
  if (!s.is_array() || s.empty()) {
    v.fail(spath, "must be a non-empty array");
    return;
  }
  const bool nested = s[0].is_array();
  if (kind && *kind == FamilyKind::GaussianFull) {
    if (!nested) {
      v.fail(spath, "must be a square matrix (array of rows) for the full family");
      return;
    }
    const int n = static_cast<int>(s.size());
    if (dim > 0 && n != dim) v.fail(spath, "must have family.dim rows");
    for (const auto& row : s) {
      if (!row.is_array() || static_cast<int>(row.size()) != n) {
        v.fail(spath, "rows must all have the same length as the row count");
        return;
      }
      for (const auto& x : row) {
        if (!x.is_number()) {
          v.fail(spath, "must contain numbers only");
          return;
        }
      }
    }
    for (int i = 0; i < n; ++i) {
      if (s[i][i].get<double>() <= 0.0) {
        v.fail(spath, "diagonal entries must be positive");
        break;
      }
    }
  } else {
    // Diagonal families accept a flat list of variances or a d x 1 nesting.
    std::vector<double> vars;
    bool ok = true;
    if (nested) {
      for (const auto& row : s) {
        if (!row.is_array() || row.size() != 1 || !row[0].is_number()) ok = false;
        else vars.push_back(row[0].get<double>());
      }
    } else {
      for (const auto& x : s) {
        if (!x.is_number()) ok = false;
        else vars.push_back(x.get<double>());
      }
    }
    if (!ok) {
      v.fail(spath, "must be a flat list of variances (or d x 1 rows) for a diagonal family");
      return;
    }
    if (dim > 0 && static_cast<int>(vars.size()) != dim) {
      v.fail(spath, "must have family.dim entries");
    }
    for (double x : vars) {
      if (!(x > 0.0)) {
        v.fail(spath, "variances must be positive");
        break;
      }
    }
  }
}

void check_synthetic_doc(Checker& v, const Json& j, const std::string& model_name, int fam_dim) {
  const std::string prefix = "model.synthetic";
  if (model_name == "blr") {
    v.known_keys(j, prefix, {"m", "d", "noise_sd", "seed"});
    if (auto sd = v.number(j, prefix, "noise_sd", true); sd && !(*sd > 0.0)) {
      v.fail(prefix + ".noise_sd", "must be positive");
    }
  } else if (model_name == "logistic") {
    v.known_keys(j, prefix, {"m", "d", "signal", "seed"});
    v.number(j, prefix, "signal", true);
  } else {
    v.known_keys(j, prefix, {"m", "d", "scale2", "seed"});
    if (auto s2 = v.number(j, prefix, "scale2", true); s2 && !(*s2 > 0.0)) {
      v.fail(prefix + ".scale2", "must be positive");
    }
  }
  if (auto m = v.integer(j, prefix, "m", true); m && *m < 1) {
    v.fail(prefix + ".m", "must be at least 1");
  }
  if (auto d = v.integer(j, prefix, "d", true)) {
    if (*d < 1) v.fail(prefix + ".d", "must be at least 1");
    else if (fam_dim > 0 && *d != fam_dim) v.fail(prefix + ".d", "must equal family.dim");
  }
  if (auto s = v.integer(j, prefix, "seed", false); s && *s < 0) {
    v.fail(prefix + ".seed", "must be non-negative");
  }
}

MomentParam parse_moments(const Json& j, const Family& family) {
  const int d = family.dim;
  MomentParam m;
  m.mu = Eigen::VectorXd::Zero(d);
  if (j.contains("mu")) {
    for (int i = 0; i < d; ++i) m.mu(i) = j["mu"][i].get<double>();
  }
  const Json& s = j["sigma"];
  if (family.kind == FamilyKind::GaussianFull) {
    m.sigma = Eigen::MatrixXd(d, d);
    for (int i = 0; i < d; ++i)
      for (int k = 0; k < d; ++k) m.sigma(i, k) = s[i][k].get<double>();
  } else {
    m.sigma = Eigen::MatrixXd(d, 1);
    for (int i = 0; i < d; ++i) {
      m.sigma(i, 0) = s[i].is_array() ? s[i][0].get<double>() : s[i].get<double>();
    }
  }
  return m;
}

const char* status_name(RunStatusKind k) {
  switch (k) {
    case RunStatusKind::Completed: return "completed";
    case RunStatusKind::WellPosednessViolated: return "well_posedness_violated";
    case RunStatusKind::NonFinite: return "non_finite";
  }
  return "unknown";
}

}  // namespace

ExperimentConfig parse_config(const std::string& text) {
  Json doc = Json::parse(text, nullptr, false);
  if (doc.is_discarded()) {
    throw Error(ErrorCode::ParseError, "config document is not valid JSON");
  }
  return ExperimentConfig{std::move(doc)};
}

ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::IoError, "cannot open config file: " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

std::vector<std::string> validate(const ExperimentConfig& config) {
  Checker v;
  const Json& doc = config.doc;
  if (!doc.is_object()) {
    v.fail("config", "must be a JSON object");
    return v.errs;
  }
  v.known_keys(doc, "",
               {"family", "model", "estimator", "projection", "schedule", "iterations", "runs",
                "base_seed", "metric_stride", "metrics", "init", "output"});

  std::optional<FamilyKind> fam_kind;
  int fam_dim = 0;
  if (const Json* fam = v.object(doc, "", "family", true)) {
    v.known_keys(*fam, "family", {"kind", "dim"});
    if (auto kind = v.str(*fam, "family", "kind", true)) {
      fam_kind = family_kind_from(*kind);
      if (!fam_kind) {
        v.fail("family.kind",
               "must be one of gaussian_full, gaussian_diag, gaussian_diag_centered");
      }
    }
    if (auto d = v.integer(*fam, "family", "dim", true)) {
      if (*d < 1) v.fail("family.dim", "must be at least 1");
      else fam_dim = static_cast<int>(*d);
    }
  }

  std::string model_name;
  if (const Json* model = v.object(doc, "", "model", true)) {
    if (auto name = v.str(*model, "model", "model", true)) {
      model_name = *name;
      if (model_name != "gaussian" && model_name != "blr" && model_name != "logistic" &&
          model_name != "student") {
        v.fail("model.model", "must be one of gaussian, blr, logistic, student");
        model_name.clear();
      }
    }
    if (model_name == "gaussian") {
      v.known_keys(*model, "model", {"model", "dim", "kappa", "seed"});
      if (auto d = v.integer(*model, "model", "dim", true)) {
        if (*d < 1) v.fail("model.dim", "must be at least 1");
        else if (fam_dim > 0 && *d != fam_dim) v.fail("model.dim", "must equal family.dim");
      }
      if (auto k = v.number(*model, "model", "kappa", true); k && !(*k > 0.0)) {
        v.fail("model.kappa", "must be positive");
      }
      if (auto s = v.integer(*model, "model", "seed", false); s && *s < 0) {
        v.fail("model.seed", "must be non-negative");
      }
    } else if (!model_name.empty()) {
      if (model_name == "blr") {
        v.known_keys(*model, "model",
                     {"model", "csv", "response", "covariates", "standardize", "synthetic",
                      "prior_scale", "noise_var"});
      } else if (model_name == "logistic") {
        v.known_keys(*model, "model",
                     {"model", "csv", "response", "covariates", "standardize", "synthetic",
                      "prior_scale"});
      } else {
        v.known_keys(*model, "model",
                     {"model", "csv", "response", "covariates", "standardize", "synthetic",
                      "prior_scale", "noise_var", "dof", "prior_mu"});
      }
      const bool has_csv = model->contains("csv");
      const bool has_synth = model->contains("synthetic");
      if (has_csv == has_synth) {
        v.fail("model", "must specify exactly one of csv or synthetic");
      } else if (has_csv) {
        if (auto path = v.str(*model, "model", "csv", true)) {
          if (!std::filesystem::exists(*path)) {
            v.fail("model.csv", "refers to a missing file: " + *path);
          }
        }
        v.str(*model, "model", "response", true);
        if (!model->contains("covariates")) {
          v.fail("model.covariates", "is required when loading from csv");
        } else {
          const Json& cov = (*model)["covariates"];
          bool ok = cov.is_array() && !cov.empty();
          if (ok) {
            for (const auto& c : cov) ok = ok && c.is_string();
          }
          if (!ok) v.fail("model.covariates", "must be a non-empty array of column names");
          else if (fam_dim > 0 && static_cast<int>(cov.size()) != fam_dim) {
            v.fail("model.covariates", "must list family.dim columns");
          }
        }
        v.boolean(*model, "model", "standardize", false);
      } else if (const Json* sy = v.object(doc["model"], "model", "synthetic", true)) {
        check_synthetic_doc(v, *sy, model_name, fam_dim);
      }
      if (auto ps = v.number(*model, "model", "prior_scale", true); ps && !(*ps > 0.0)) {
        v.fail("model.prior_scale", "must be positive");
      }
      if (model_name == "blr" || model_name == "student") {
        if (auto nv = v.number(*model, "model", "noise_var", true); nv && !(*nv > 0.0)) {
          v.fail("model.noise_var", "must be positive");
        }
      }
      if (model_name == "student") {
        if (auto dof = v.number(*model, "model", "dof", true); dof && !(*dof > 0.0)) {
          v.fail("model.dof", "must be positive");
        }
        if (model->contains("prior_mu")) {
          const Json& pm = (*model)["prior_mu"];
          bool ok = pm.is_array();
          if (ok) {
            for (const auto& x : pm) ok = ok && x.is_number();
          }
          if (!ok) v.fail("model.prior_mu", "must be an array of numbers");
          else if (fam_dim > 0 && static_cast<int>(pm.size()) != fam_dim) {
            v.fail("model.prior_mu", "must have family.dim entries");
          }
        }
      }
    }
  }

  std::optional<EstimatorKind> est;
  if (auto name = v.str(doc, "", "estimator", true)) {
    est = estimator_from(*name);
    if (!est) v.fail("estimator", "must be one of bonnet_price, subsample, exact");
  }

  std::string projection_name = "none";
  if (doc.contains("projection")) {
    if (const Json* proj = v.object(doc, "", "projection", false)) {
      if (auto name = v.str(*proj, "projection", "projection", true)) {
        projection_name = *name;
        if (projection_name == "eigen_clip") {
          v.known_keys(*proj, "projection", {"projection", "alpha", "beta"});
          const auto a = v.number(*proj, "projection", "alpha", true);
          const auto b = v.number(*proj, "projection", "beta", true);
          if (a && !(*a > 0.0)) v.fail("projection.alpha", "must be positive");
          if (a && b && !(*a < *b)) v.fail("projection.beta", "must exceed projection.alpha");
        } else if (projection_name == "none" || projection_name == "nonneg_mean") {
          v.known_keys(*proj, "projection", {"projection"});
        } else {
          v.fail("projection.projection", "must be one of none, eigen_clip, nonneg_mean");
          projection_name = "none";
        }
      }
    }
  }

  if (const Json* sch = v.object(doc, "", "schedule", true)) {
    v.known_keys(*sch, "schedule", {"step", "batch"});
    if (const Json* step = v.object(*sch, "schedule", "step", true)) {
      if (auto kind = v.str(*step, "schedule.step", "kind", true)) {
        if (*kind == "constant") {
          v.known_keys(*step, "schedule.step", {"kind", "eta"});
          if (auto eta = v.number(*step, "schedule.step", "eta", true)) {
            if (!(*eta > 0.0) || !(*eta <= 1.0)) {
              v.fail("schedule.step.eta", "must lie in (0,1]");
            }
          }
        } else if (*kind == "decreasing") {
          v.known_keys(*step, "schedule.step", {"kind", "m"});
          if (auto m = v.number(*step, "schedule.step", "m", false); m && !(*m >= 1.0)) {
            v.fail("schedule.step.m", "must be at least 1 so that every eta lies in (0,1]");
          }
        } else {
          v.fail("schedule.step.kind", "must be constant or decreasing");
        }
      }
    }
    if (const Json* batch = v.object(*sch, "schedule", "batch", true)) {
      if (auto kind = v.str(*batch, "schedule.batch", "kind", true)) {
        if (*kind == "constant") {
          v.known_keys(*batch, "schedule.batch", {"kind", "n"});
          if (auto n = v.integer(*batch, "schedule.batch", "n", true); n && *n < 1) {
            v.fail("schedule.batch.n", "must be at least 1");
          }
        } else if (*kind == "poly") {
          v.known_keys(*batch, "schedule.batch", {"kind", "gamma"});
          if (auto g = v.number(*batch, "schedule.batch", "gamma", true); g && !(*g > 0.0)) {
            v.fail("schedule.batch.gamma", "must be positive");
          }
        } else if (*kind == "clipped_poly") {
          v.known_keys(*batch, "schedule.batch", {"kind", "n", "gamma"});
          if (auto n = v.integer(*batch, "schedule.batch", "n", true); n && *n < 1) {
            v.fail("schedule.batch.n", "must be at least 1");
          }
          if (auto g = v.number(*batch, "schedule.batch", "gamma", true); g && !(*g > 0.0)) {
            v.fail("schedule.batch.gamma", "must be positive");
          }
        } else {
          v.fail("schedule.batch.kind", "must be constant, poly, or clipped_poly");
        }
      }
    }
  }

  if (auto t = v.integer(doc, "", "iterations", true); t && *t < 1) {
    v.fail("iterations", "must be at least 1");
  }
  if (auto r = v.integer(doc, "", "runs", true); r && *r < 1) {
    v.fail("runs", "must be at least 1");
  }
  if (auto s = v.integer(doc, "", "base_seed", false); s && *s < 0) {
    v.fail("base_seed", "must be non-negative");
  }
  if (auto st = v.integer(doc, "", "metric_stride", false); st && *st < 1) {
    v.fail("metric_stride", "must be at least 1");
  }
  if (doc.contains("output")) v.str(doc, "", "output", false);

  bool want_bregman = false;
  bool has_omega_star = false;
  if (doc.contains("metrics")) {
    if (const Json* met = v.object(doc, "", "metrics", false)) {
      v.known_keys(*met, "metrics", {"bregman", "elbo", "omega_star"});
      if (auto b = v.boolean(*met, "metrics", "bregman", false)) want_bregman = *b;
      if (met->contains("elbo")) {
        const Json& e = (*met)["elbo"];
        if (e.is_boolean()) {
          // plain true means the default sample count
        } else if (e.is_object()) {
          v.known_keys(e, "metrics.elbo", {"n_samples"});
          if (auto n = v.integer(e, "metrics.elbo", "n_samples", true); n && *n < 1) {
            v.fail("metrics.elbo.n_samples", "must be at least 1");
          }
        } else {
          v.fail("metrics.elbo", "must be a boolean or an object with n_samples");
        }
      }
      if (met->contains("omega_star")) {
        if (const Json* ws = v.object(*met, "metrics", "omega_star", false)) {
          has_omega_star = true;
          check_moments_doc(v, *ws, "metrics.omega_star", fam_kind, fam_dim);
        }
      }
    }
  }

  if (doc.contains("init")) {
    if (const Json* init = v.object(doc, "", "init", false)) {
      check_moments_doc(v, *init, "init", fam_kind, fam_dim);
    }
  }

  // Cross-references between otherwise well-formed pieces.
  if (projection_name == "nonneg_mean" && fam_kind && *fam_kind != FamilyKind::GaussianDiag) {
    v.fail("projection.projection", "nonneg_mean requires the gaussian_diag family");
  }
  if (est && *est == EstimatorKind::Subsample && !model_name.empty()) {
    if (model_name != "blr") {
      v.fail("estimator", "subsample requires the blr model (finite-sum likelihood)");
    }
    if (fam_kind && *fam_kind != FamilyKind::GaussianFull) {
      v.fail("estimator", "subsample requires the gaussian_full family");
    }
  }
  if (est && *est == EstimatorKind::Exact && !model_name.empty() &&
      !conjugate_model_name(model_name)) {
    v.fail("estimator", "exact requires a conjugate model (gaussian or blr)");
  }
  if (est && *est == EstimatorKind::BonnetPrice && fam_kind &&
      *fam_kind == FamilyKind::GaussianDiagCentered) {
    v.fail("estimator", "bonnet_price cannot target the centered family");
  }
  if (want_bregman && !model_name.empty() && !conjugate_model_name(model_name) &&
      !has_omega_star) {
    v.fail("metrics.bregman", "requires a conjugate model or metrics.omega_star");
  }
  return v.errs;
}

namespace {

Dataset build_dataset(const Json& m, const std::string& model_name) {
  if (m.contains("csv")) {
    std::vector<std::string> covariates;
    if (m.contains("covariates")) {
      for (const auto& c : m["covariates"]) covariates.push_back(c.get<std::string>());
    }
    return load_csv(m["csv"].get<std::string>(), m["response"].get<std::string>(), covariates,
                    m.value("standardize", false));
  }
  const Json& sy = m["synthetic"];
  const int rows = sy["m"].get<int>();
  const int d = sy["d"].get<int>();
  const std::uint64_t seed = sy.value("seed", 0);
  if (model_name == "blr") {
    return synthetic_regression_data(rows, d, sy["noise_sd"].get<double>(), seed);
  }
  if (model_name == "logistic") {
    return synthetic_logistic_data(rows, d, sy["signal"].get<double>(), seed);
  }
  return synthetic_student_data(rows, d, sy["scale2"].get<double>(),
                                m["dof"].get<double>(), seed);
}

TargetModel build_target(const Json& doc, const Family& family) {
  const Json& m = doc["model"];
  const std::string name = m["model"].get<std::string>();
  if (name == "gaussian") {
    return TargetModel::synthetic_gaussian(m["dim"].get<int>(), m["kappa"].get<double>(),
                                           m.value("seed", 0));
  }
  Dataset data = build_dataset(m, name);
  if (data.dim() != family.dim) {
    throw Error(ErrorCode::ConfigError, "model data dimension " + std::to_string(data.dim()) +
                                            " does not match family.dim " +
                                            std::to_string(family.dim));
  }
  if (data.size() < 1) {
    throw Error(ErrorCode::ConfigError, "model dataset has no rows");
  }
  const double scale = m["prior_scale"].get<double>();
  const Eigen::MatrixXd sigma0 =
      scale * Eigen::MatrixXd::Identity(family.dim, family.dim);
  if (name == "blr") {
    return TargetModel::bayes_lin_reg(std::move(data), sigma0, m["noise_var"].get<double>());
  }
  if (name == "logistic") {
    return TargetModel::logistic(std::move(data), sigma0);
  }
  Eigen::VectorXd mu0 = Eigen::VectorXd::Zero(family.dim);
  if (m.contains("prior_mu")) {
    for (int i = 0; i < family.dim; ++i) mu0(i) = m["prior_mu"][i].get<double>();
  }
  return TargetModel::student_reg(std::move(data), std::move(mu0), sigma0,
                                  m["noise_var"].get<double>(), m["dof"].get<double>());
}

}  // namespace

CompiledExperiment compile(const ExperimentConfig& config) {
  const std::vector<std::string> violations = validate(config);
  if (!violations.empty()) {
    std::string joined;
    for (const auto& e : violations) {
      if (!joined.empty()) joined += "; ";
      joined += e;
    }
    throw Error(ErrorCode::ConfigError, joined);
  }
  const Json& doc = config.doc;
  const Family family{*family_kind_from(doc["family"]["kind"].get<std::string>()),
                      doc["family"]["dim"].get<int>()};

  CompiledExperiment ex{build_target(doc, family)};
  ex.family = family;

  if (doc.contains("projection")) {
    const Json& p = doc["projection"];
    const std::string name = p["projection"].get<std::string>();
    if (name == "eigen_clip") {
      ex.constraint = ConstraintSet::eigen_clip(p["alpha"].get<double>(), p["beta"].get<double>());
    } else if (name == "nonneg_mean") {
      ex.constraint = ConstraintSet::non_negative_mean();
    }
  }

  const Json& step = doc["schedule"]["step"];
  ex.schedule.step = step["kind"].get<std::string>() == "constant"
                         ? StepSchedule::constant(step["eta"].get<double>())
                         : StepSchedule::decreasing(step.value("m", 1.0));
  const Json& batch = doc["schedule"]["batch"];
  const std::string bk = batch["kind"].get<std::string>();
  if (bk == "constant") {
    ex.schedule.batch = BatchSchedule::constant(batch["n"].get<int>());
  } else if (bk == "poly") {
    ex.schedule.batch = BatchSchedule::poly(batch["gamma"].get<double>());
  } else {
    ex.schedule.batch =
        BatchSchedule::clipped_poly(batch["n"].get<int>(), batch["gamma"].get<double>());
  }

  ex.estimator = *estimator_from(doc["estimator"].get<std::string>());
  ex.iterations = doc["iterations"].get<long>();
  ex.runs = doc["runs"].get<int>();
  ex.base_seed = doc.value("base_seed", 0ull);
  ex.metrics.stride = doc.value("metric_stride", 1);
  ex.output = doc.value("output", std::string());

  if (doc.contains("metrics")) {
    const Json& met = doc["metrics"];
    ex.metrics.bregman = met.value("bregman", false);
    if (met.contains("elbo")) {
      const Json& e = met["elbo"];
      if (e.is_boolean()) {
        ex.metrics.elbo = e.get<bool>();
      } else {
        ex.metrics.elbo = true;
        ex.metrics.elbo_samples = e["n_samples"].get<int>();
      }
    }
    if (met.contains("omega_star")) {
      try {
        ex.metrics.omega_star = ExpParam::from_moments(family, parse_moments(met["omega_star"], family));
      } catch (const Error& e) {
        throw Error(ErrorCode::ConfigError,
                    std::string("metrics.omega_star is not a valid interior point: ") + e.what());
      }
    }
  }

  if (doc.contains("init")) {
    const MomentParam m = parse_moments(doc["init"], family);
    try {
      (void)ExpParam::from_moments(family, m);
    } catch (const Error& e) {
      throw Error(ErrorCode::ConfigError,
                  std::string("init is not a valid interior point: ") + e.what());
    }
    ex.init = m;
  }
  return ex;
}

ExpParam initial_iterate(const CompiledExperiment& ex, std::uint64_t run_seed) {
  if (ex.init.has_value()) return ExpParam::from_moments(ex.family, *ex.init);
  const int d = ex.family.dim;
  MomentParam m;
  m.mu = Eigen::VectorXd::Zero(d);
  if (ex.family.has_mean_block()) {
    Rng rng = make_rng(run_seed ^ kInitSalt);
    std::uniform_real_distribution<double> box(-5.0, 5.0);
    for (int i = 0; i < d; ++i) m.mu(i) = box(rng);
  }
  const double scale = ex.model.kind() == ModelKind::Logistic ? 0.5 : 10.0;
  if (ex.family.kind == FamilyKind::GaussianFull) {
    m.sigma = scale * Eigen::MatrixXd::Identity(d, d);
  } else {
    m.sigma = Eigen::MatrixXd::Constant(d, 1, scale);
  }
  return ExpParam::from_moments(ex.family, m);
}

int resolve_jobs(int requested) {
  if (const char* env = std::getenv("NGVI_JOBS")) {
    char* end = nullptr;
    const long v = std::strtol(env, &end, 10);
    if (end != env && *end == '\0' && v >= 1) {
      return static_cast<int>(std::min(v, 256L));
    }
  }
  if (requested >= 1) return requested;
  const unsigned hc = std::thread::hardware_concurrency();
  return hc == 0 ? 1 : static_cast<int>(hc);
}

ExperimentResult run_experiment(const CompiledExperiment& ex, int jobs) {
  const int total = ex.runs;
  ExperimentResult result;
  result.traces.resize(total);
  const int workers = std::max(1, std::min(resolve_jobs(jobs), total));
  const auto t0 = std::chrono::steady_clock::now();

  std::atomic<int> next{0};
  std::vector<std::exception_ptr> errors(workers);
  const auto work = [&](int slot) {
    try {
      for (int r = next.fetch_add(1); r < total; r = next.fetch_add(1)) {
        const std::uint64_t seed = ex.base_seed + static_cast<std::uint64_t>(r);
        const ExpParam omega0 = initial_iterate(ex, seed);
        result.traces[r] = run(ex.model, ex.family, ex.constraint, ex.schedule, ex.estimator,
                               ex.iterations, omega0, seed, ex.metrics);
      }
    } catch (...) {
      errors[slot] = std::current_exception();
    }
  };

  if (workers == 1) {
    work(0);
  } else {
    std::vector<std::thread> pool;
    pool.reserve(workers);
    for (int w = 0; w < workers; ++w) pool.emplace_back(work, w);
    for (auto& th : pool) th.join();
  }
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }

  result.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  for (const auto& tr : result.traces) {
    if (tr.status.kind != RunStatusKind::Completed) ++result.failures;
  }
  return result;
}

void write_results_csv(const std::string& path, const ExperimentResult& result) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::IoError, "cannot open for writing: " + path);
  out << "run,iter,eta,batch,budget,metric,value\n";
  for (std::size_t r = 0; r < result.traces.size(); ++r) {
    for (const TraceRecord& rec : result.traces[r].records) {
      const auto row = [&](const char* metric, double value) {
        out << r << ',' << rec.t << ',' << fmt17(rec.eta) << ',' << rec.batch << ','
            << rec.budget << ',' << metric << ',' << fmt17(value) << '\n';
      };
      if (rec.bregman_to_opt.has_value()) row("bregman", *rec.bregman_to_opt);
      if (rec.elbo_mc.has_value()) row("elbo", *rec.elbo_mc);
    }
  }
  if (!out) throw Error(ErrorCode::IoError, "write failed: " + path);
}

void write_manifest(const std::string& path, const ExperimentConfig& config,
                    const CompiledExperiment& ex, const ExperimentResult& result) {
  Json man;
  man["config"] = config.doc;
  Json seeds = Json::array();
  for (int r = 0; r < ex.runs; ++r) seeds.push_back(ex.base_seed + static_cast<std::uint64_t>(r));
  man["seeds"] = std::move(seeds);
  man["runs"] = ex.runs;
  man["failures"] = result.failures;
  Json statuses = Json::array();
  for (const auto& tr : result.traces) {
    statuses.push_back(Json{{"status", status_name(tr.status.kind)},
                            {"failed_at", tr.status.failed_at}});
  }
  man["statuses"] = std::move(statuses);
  man["wall_seconds"] = result.wall_seconds;
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::IoError, "cannot open for writing: " + path);
  out << man.dump(2) << '\n';
  if (!out) throw Error(ErrorCode::IoError, "write failed: " + path);
}

ExperimentResult run_experiment_to_dir(const ExperimentConfig& config, const std::string& out_dir,
                                       int jobs) {
  CompiledExperiment ex = compile(config);
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (ec) throw Error(ErrorCode::IoError, "cannot create directory: " + out_dir);
  ExperimentResult result = run_experiment(ex, jobs);
  write_results_csv(out_dir + "/results.csv", result);
  write_manifest(out_dir + "/manifest.json", config, ex, result);
  return result;
}

namespace {

std::vector<std::string> split_csv_row(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::stringstream ss(line);
  while (std::getline(ss, cell, ',')) out.push_back(cell);
  if (!line.empty() && line.back() == ',') out.push_back("");
  return out;
}

double parse_double_cell(const std::string& cell, long row, const char* what) {
  try {
    std::size_t used = 0;
    const double v = std::stod(cell, &used);
    if (used != cell.size()) throw std::invalid_argument("trailing");
    return v;
  } catch (const std::exception&) {
    throw Error(ErrorCode::ParseError, "row " + std::to_string(row) + ": cannot parse " +
                                           std::string(what) + " '" + cell + "'");
  }
}

long parse_long_cell(const std::string& cell, long row, const char* what) {
  try {
    std::size_t used = 0;
    const long v = std::stol(cell, &used);
    if (used != cell.size()) throw std::invalid_argument("trailing");
    return v;
  } catch (const std::exception&) {
    throw Error(ErrorCode::ParseError, "row " + std::to_string(row) + ": cannot parse " +
                                           std::string(what) + " '" + cell + "'");
  }
}

}  // namespace

std::vector<RunTrace> read_results_csv(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::IoError, "cannot open: " + path);
  std::string line;
  if (!std::getline(in, line)) throw Error(ErrorCode::EmptyInput, "empty results file: " + path);
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != "run,iter,eta,batch,budget,metric,value") {
    throw Error(ErrorCode::SchemaError, "unexpected results header: " + line);
  }

  std::map<long, std::map<long, TraceRecord>> by_run;
  long row = 1;
  while (std::getline(in, line)) {
    ++row;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const std::vector<std::string> cells = split_csv_row(line);
    if (cells.size() != 7) {
      throw Error(ErrorCode::ParseError,
                  "row " + std::to_string(row) + " has " + std::to_string(cells.size()) +
                      " fields, expected 7");
    }
    const long run_id = parse_long_cell(cells[0], row, "run");
    const long t = parse_long_cell(cells[1], row, "iter");
    const double eta = parse_double_cell(cells[2], row, "eta");
    const long batch = parse_long_cell(cells[3], row, "batch");
    const long budget = parse_long_cell(cells[4], row, "budget");
    const std::string& metric = cells[5];
    const double value = parse_double_cell(cells[6], row, "value");
    if (run_id < 0 || t < 0) {
      throw Error(ErrorCode::ParseError, "row " + std::to_string(row) + ": negative run or iter");
    }
    if (metric != "bregman" && metric != "elbo") {
      throw Error(ErrorCode::SchemaError,
                  "row " + std::to_string(row) + ": unknown metric '" + metric + "'");
    }
    TraceRecord& rec = by_run[run_id][t];
    if (rec.t == 0 && !rec.bregman_to_opt && !rec.elbo_mc && rec.batch == 0 && rec.budget == 0 &&
        rec.eta == 0.0) {
      rec.t = t;
      rec.eta = eta;
      rec.batch = static_cast<int>(batch);
      rec.budget = budget;
    } else if (rec.eta != eta || rec.batch != batch || rec.budget != budget) {
      throw Error(ErrorCode::ParseError,
                  "row " + std::to_string(row) + ": conflicts with an earlier row for run " +
                      std::to_string(run_id) + ", iteration " + std::to_string(t));
    }
    if (metric == "bregman") rec.bregman_to_opt = value;
    else rec.elbo_mc = value;
  }

  std::vector<RunTrace> traces;
  traces.reserve(by_run.size());
  for (auto& [id, records] : by_run) {
    RunTrace tr;
    tr.records.reserve(records.size());
    for (auto& [t, rec] : records) tr.records.push_back(std::move(rec));
    tr.status = {RunStatusKind::Completed, -1};
    traces.push_back(std::move(tr));
  }
  return traces;
}

std::vector<RunTrace> load_traces(const std::string& run_dir) {
  std::vector<RunTrace> traces = read_results_csv(run_dir + "/results.csv");
  const std::string manifest_path = run_dir + "/manifest.json";
  if (std::filesystem::exists(manifest_path)) {
    std::ifstream in(manifest_path);
    if (!in) throw Error(ErrorCode::IoError, "cannot open: " + manifest_path);
    Json man = Json::parse(in, nullptr, false);
    if (man.is_discarded()) {
      throw Error(ErrorCode::ParseError, "manifest is not valid JSON: " + manifest_path);
    }
    if (man.contains("statuses") && man["statuses"].is_array() &&
        man["statuses"].size() == traces.size()) {
      for (std::size_t i = 0; i < traces.size(); ++i) {
        const Json& st = man["statuses"][i];
        const std::string name = st.value("status", "completed");
        RunStatus status{RunStatusKind::Completed, -1};
        if (name == "well_posedness_violated") {
          status = {RunStatusKind::WellPosednessViolated, st.value("failed_at", -1L)};
        } else if (name == "non_finite") {
          status = {RunStatusKind::NonFinite, st.value("failed_at", -1L)};
        }
        traces[i].status = status;
      }
    }
  }
  return traces;
}

double interpolated_quantile(std::vector<double> values, double p) {
  if (values.empty()) throw Error(ErrorCode::EmptyInput, "quantile of an empty sample");
  if (!(p >= 0.0) || !(p <= 1.0)) {
    throw Error(ErrorCode::InvalidArgument, "quantile order must lie in [0, 1]");
  }
  std::sort(values.begin(), values.end());
  const std::size_t n = values.size();
  if (n == 1) return values[0];
  const double h = static_cast<double>(n - 1) * p;
  const std::size_t lo = static_cast<std::size_t>(h);
  if (lo + 1 >= n) return values[n - 1];
  const double frac = h - static_cast<double>(lo);
  return values[lo] + frac * (values[lo + 1] - values[lo]);
}

std::vector<std::string> metrics_present(const std::vector<RunTrace>& traces) {
  bool has_bregman = false;
  bool has_elbo = false;
  for (const auto& tr : traces) {
    for (const auto& rec : tr.records) {
      has_bregman = has_bregman || rec.bregman_to_opt.has_value();
      has_elbo = has_elbo || rec.elbo_mc.has_value();
    }
  }
  std::vector<std::string> out;
  if (has_bregman) out.push_back("bregman");
  if (has_elbo) out.push_back("elbo");
  return out;
}

AggregateSeries aggregate(const std::vector<RunTrace>& traces, const std::string& metric,
                          Abscissa abscissa, Statistic statistic) {
  const bool use_bregman = metric == "bregman";
  if (!use_bregman && metric != "elbo") {
    throw Error(ErrorCode::InvalidArgument, "unknown metric '" + metric + "'");
  }
  if (traces.empty()) throw Error(ErrorCode::EmptyInput, "no traces to aggregate");
  bool any_completed = false;
  for (const auto& tr : traces) {
    any_completed = any_completed || tr.status.kind == RunStatusKind::Completed;
  }
  if (!any_completed) {
    throw Error(ErrorCode::EmptyInput, "every run in the set failed; nothing to aggregate");
  }

  struct Slot {
    double eta;
    int batch;
    long budget;
    std::vector<double> values;
  };
  std::map<long, Slot> by_t;
  for (const auto& tr : traces) {
    for (const auto& rec : tr.records) {
      auto it = by_t.find(rec.t);
      if (it == by_t.end()) {
        it = by_t.emplace(rec.t, Slot{rec.eta, rec.batch, rec.budget, {}}).first;
      } else if (it->second.eta != rec.eta || it->second.batch != rec.batch ||
                 it->second.budget != rec.budget) {
        throw Error(ErrorCode::MisalignedTraces,
                    "traces disagree on the schedule at iteration " + std::to_string(rec.t));
      }
      const std::optional<double>& v = use_bregman ? rec.bregman_to_opt : rec.elbo_mc;
      if (v.has_value()) it->second.values.push_back(*v);
    }
  }

  AggregateSeries series;
  series.abscissa = abscissa;
  series.statistic = statistic;
  series.metric = metric;
  for (auto& [t, slot] : by_t) {
    if (slot.values.empty()) continue;
    AggregateRow row;
    row.x = abscissa == Abscissa::Iteration ? static_cast<double>(t)
                                            : static_cast<double>(slot.budget);
    if (statistic == Statistic::Mean) {
      double sum = 0.0;
      for (double v : slot.values) sum += v;
      row.center = sum / static_cast<double>(slot.values.size());
      row.lo = row.center;
      row.hi = row.center;
    } else {
      row.center = interpolated_quantile(slot.values, 0.5);
      row.lo = interpolated_quantile(slot.values, 0.25);
      row.hi = interpolated_quantile(slot.values, 0.75);
    }
    series.rows.push_back(row);
  }
  if (series.rows.empty()) {
    throw Error(ErrorCode::EmptyInput, "no recorded values for metric '" + metric + "'");
  }
  return series;
}

void write_aggregate_csv(const std::string& path, const AggregateSeries& series) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::IoError, "cannot open for writing: " + path);
  out << "x,center,lo,hi\n";
  for (const AggregateRow& row : series.rows) {
    out << fmt17(row.x) << ',' << fmt17(row.center) << ',' << fmt17(row.lo) << ','
        << fmt17(row.hi) << '\n';
  }
  if (!out) throw Error(ErrorCode::IoError, "write failed: " + path);
}

namespace {

void set_dotted(Json& doc, const std::string& dotted, const Json& value) {
  Json* cur = &doc;
  std::size_t start = 0;
  while (true) {
    const std::size_t dot = dotted.find('.', start);
    const std::string part = dotted.substr(start, dot == std::string::npos ? dot : dot - start);
    if (part.empty()) {
      throw Error(ErrorCode::SchemaError, "grid key has an empty path segment: " + dotted);
    }
    if (dot == std::string::npos) {
      (*cur)[part] = value;
      return;
    }
    if (!cur->contains(part) || !(*cur)[part].is_object()) (*cur)[part] = Json::object();
    cur = &(*cur)[part];
    start = dot + 1;
  }
}

// Directory-name-safe rendering of a grid value.
std::string value_label(const Json& v) {
  std::string s = v.is_string() ? v.get<std::string>() : v.dump();
  for (char& c : s) {
    const bool keep = (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') ||
                      (c >= '0' && c <= '9') || c == '.' || c == '-' || c == '+' || c == '_';
    if (!keep) c = '_';
  }
  return s;
}

}  // namespace

void set_config_key(ExperimentConfig& config, const std::string& dotted_key, const Json& value) {
  set_dotted(config.doc, dotted_key, value);
}

std::vector<SweepEntry> expand_grid(const ExperimentConfig& base, const Json& grid) {
  if (!grid.is_object() || grid.empty()) {
    throw Error(ErrorCode::SchemaError, "grid must be a non-empty object of key -> array");
  }
  std::vector<std::string> keys;
  std::vector<const Json*> choices;
  std::size_t total = 1;
  for (const auto& item : grid.items()) {
    if (!item.value().is_array() || item.value().empty()) {
      throw Error(ErrorCode::SchemaError,
                  "grid entry '" + item.key() + "' must be a non-empty array");
    }
    keys.push_back(item.key());
    choices.push_back(&item.value());
    total *= item.value().size();
    if (total > 10000) {
      throw Error(ErrorCode::InvalidArgument, "grid expands to more than 10000 configs");
    }
  }

  std::vector<SweepEntry> out;
  out.reserve(total);
  std::vector<std::size_t> idx(keys.size(), 0);
  for (std::size_t count = 0; count < total; ++count) {
    ExperimentConfig child{base.doc};
    std::string name;
    for (std::size_t k = 0; k < keys.size(); ++k) {
      const Json& v = (*choices[k])[idx[k]];
      set_dotted(child.doc, keys[k], v);
      if (!name.empty()) name += ',';
      name += keys[k] + "=" + value_label(v);
    }
    out.push_back(SweepEntry{std::move(name), std::move(child)});
    for (std::size_t k = keys.size(); k-- > 0;) {
      if (++idx[k] < choices[k]->size()) break;
      idx[k] = 0;
    }
  }
  return out;
}

}  // namespace ngvi
