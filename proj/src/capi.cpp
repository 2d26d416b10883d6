#include "diffsketch/diffsketch.h"

#include <cstdlib>
#include <memory>
#include <mutex>
#include <new>
#include <string>

#include <json.hpp>

#include "cdst.hpp"
#include "distiller.hpp"
#include "metrics.hpp"
#include "pipeline.hpp"

using namespace diffsketch;

struct ds_backend {
  std::string spec;
  std::unique_ptr<store::DiffusionBackend> impl;
};

struct ds_student {
  distiller::ConvStudent impl;
};

namespace {

thread_local std::string g_last_error;

std::mutex g_log_mutex;
ds_log_fn g_log_fn = nullptr;
void* g_log_user = nullptr;

void emit(const std::string& msg) {
  std::lock_guard<std::mutex> lock(g_log_mutex);
  if (g_log_fn) g_log_fn(msg.c_str(), g_log_user);
}

ds_status fail(ds_status s, const std::string& msg) {
  g_last_error = msg;
  return s;
}

template <class F>
ds_status guarded(F&& f) {
  g_last_error.clear();
  try {
    f();
    return DS_OK;
  } catch (const UsageError& e) {
    return fail(DS_ERR_USAGE, e.what());
  } catch (const InputError& e) {
    return fail(DS_ERR_INPUT, e.what());
  } catch (const NumericError& e) {
    return fail(DS_ERR_NUMERIC, e.what());
  } catch (const nlohmann::json::exception& e) {
    return fail(DS_ERR_INPUT, e.what());
  } catch (const std::filesystem::filesystem_error& e) {
    return fail(DS_ERR_INPUT, e.what());
  } catch (const std::bad_alloc&) {
    return fail(DS_ERR_NUMERIC, "out of memory");
  } catch (const std::invalid_argument& e) {
    return fail(DS_ERR_INPUT, e.what());
  } catch (const std::exception& e) {
    return fail(DS_ERR_INPUT, e.what());
  }
}

void require(const void* p, const char* what) {
  if (!p) throw UsageError(std::string(what) + " must not be NULL");
}

pipeline::Context context(const ds_backend* b) {
  pipeline::Context ctx;
  if (b) {
    ctx.backend = b->impl.get();
    ctx.backend_spec = b->spec;
  }
  ctx.log = emit;
  return ctx;
}

std::optional<std::filesystem::path> opt_path(const char* p) {
  if (!p || !*p) return std::nullopt;
  return std::filesystem::path(p);
}

}  // namespace

extern "C" {

const char* ds_version(void) { return "0.1.0"; }

const char* ds_last_error(void) { return g_last_error.c_str(); }

void ds_set_log_callback(ds_log_fn fn, void* user) {
  std::lock_guard<std::mutex> lock(g_log_mutex);
  g_log_fn = fn;
  g_log_user = user;
}

ds_status ds_backend_create(const char* spec, ds_backend** out) {
  return guarded([&] {
    require(out, "out");
    *out = nullptr;
    std::string s;
    if (spec) s = spec;
    else if (const char* env = std::getenv("DIFFSKETCH_BACKEND")) s = env;
    if (s.empty()) s = "toy";
    auto impl = pipeline::make_backend(s);
    *out = new ds_backend{s, std::move(impl)};
  });
}

void ds_backend_destroy(ds_backend* backend) { delete backend; }

int ds_backend_image_size(const ds_backend* backend) { return backend ? backend->impl->image_size() : 0; }

ds_status ds_make_triplet(const ds_backend* backend, const char* out_dir, uint64_t seed) {
  return guarded([&] {
    require(backend, "backend");
    require(out_dir, "out_dir");
    pipeline::make_triplet(context(backend), {out_dir, seed});
  });
}

ds_status ds_analyze(const ds_backend* backend, const char* const* archives, size_t n_archives, int pca_dim,
                     uint64_t seed, const char* out_report) {
  return guarded([&] {
    require(out_report, "out_report");
    if (n_archives) require(archives, "archives");
    pipeline::AnalyzeOptions o;
    for (size_t i = 0; i < n_archives; ++i) {
      require(archives[i], "archive path");
      o.archives.emplace_back(archives[i]);
    }
    o.pca_dim = pca_dim;
    o.seed = seed;
    o.out = out_report;
    pipeline::analyze(context(backend), o);
  });
}

ds_status ds_train(const ds_backend* backend, const char* triplet_dir, const char* selection_report,
                   const char* config, const char* out_dir, uint64_t seed, int checkpoint_every, int resume) {
  return guarded([&] {
    require(backend, "backend");
    require(triplet_dir, "triplet_dir");
    require(selection_report, "selection_report");
    require(out_dir, "out_dir");
    pipeline::TrainOptions o;
    o.triplet = triplet_dir;
    o.selection = selection_report;
    o.config = opt_path(config);
    o.out = out_dir;
    o.seed = seed;
    if (checkpoint_every >= 0) o.checkpoint_every = checkpoint_every;
    o.resume = resume != 0;
    pipeline::train(context(backend), o);
  });
}

ds_status ds_sample_pairs(const ds_backend* backend, const char* ckpt_dir, int n, int S, const char* out_dir,
                          uint64_t seed) {
  return guarded([&] {
    require(backend, "backend");
    require(ckpt_dir, "ckpt_dir");
    require(out_dir, "out_dir");
    pipeline::sample_pairs(context(backend), {ckpt_dir, n, S, out_dir, seed});
  });
}

ds_status ds_distill(const char* pairs_dir, const char* gt_dir, const char* out_dir, uint64_t seed, int epochs,
                     int reg_every, double learning_rate) {
  return guarded([&] {
    require(pairs_dir, "pairs_dir");
    require(gt_dir, "gt_dir");
    require(out_dir, "out_dir");
    pipeline::distill(context(nullptr), {pairs_dir, gt_dir, out_dir, seed, epochs, reg_every, learning_rate});
  });
}

ds_status ds_extract(const char* student_dir, const char* image_png, const char* out_png) {
  return guarded([&] {
    require(student_dir, "student_dir");
    require(image_png, "image_png");
    require(out_png, "out_png");
    pipeline::extract(context(nullptr), {student_dir, image_png, out_png});
  });
}

ds_status ds_eval(const char* pred_dir, const char* gt_dir, const char* out_csv, const char* style) {
  return guarded([&] {
    require(pred_dir, "pred_dir");
    require(gt_dir, "gt_dir");
    require(out_csv, "out_csv");
    pipeline::eval(context(nullptr), {pred_dir, gt_dir, out_csv, style && *style ? style : "default"});
  });
}

ds_status ds_ablate(const ds_backend* backend, const char* triplet_dir, const char* selection_report,
                    const char* config, const char* out_csv, uint64_t seed, int eval_pairs) {
  return guarded([&] {
    require(backend, "backend");
    require(triplet_dir, "triplet_dir");
    require(selection_report, "selection_report");
    require(out_csv, "out_csv");
    pipeline::ablate(context(backend),
                     {triplet_dir, selection_report, opt_path(config), out_csv, seed, eval_pairs});
  });
}

ds_status ds_student_load(const char* student_dir, ds_student** out) {
  return guarded([&] {
    require(student_dir, "student_dir");
    require(out, "out");
    *out = nullptr;
    *out = new ds_student{distiller::load_student(student_dir)};
  });
}

void ds_student_destroy(ds_student* student) { delete student; }

ds_status ds_student_extract(const ds_student* student, const float* rgb, int height, int width, float* out_sketch) {
  return guarded([&] {
    require(student, "student");
    require(rgb, "rgb");
    require(out_sketch, "out_sketch");
    if (height < 2 || width < 2) throw UsageError("image must be at least 2 x 2");
    store::Image img{Tensor32({height, width, 3})};
    std::copy(rgb, rgb + img.pixels.size(), img.pixels.raw().begin());
    img.validate();
    const auto s = student->impl.extract(img);
    std::copy(s.pixels.raw().begin(), s.pixels.raw().end(), out_sketch);
  });
}

ds_status ds_schedule(int iter, int horizon, double* w_condition, double* w_distribution) {
  return guarded([&] {
    require(w_condition, "w_condition");
    require(w_distribution, "w_distribution");
    const auto w = cdst::schedule(iter, horizon);
    *w_condition = w.condition;
    *w_distribution = w.distribution;
  });
}

ds_status ds_emd(const double* a, size_t n, const double* b, size_t m, size_t d, double* out) {
  return guarded([&] {
    require(out, "out");
    if (n == 0 || m == 0) throw InputError("emd: empty point set");
    if (d == 0) throw UsageError("emd: dimension must be positive");
    require(a, "a");
    require(b, "b");
    using RowMajor = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
    const Eigen::MatrixXd ma = Eigen::Map<const RowMajor>(a, static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(d));
    const Eigen::MatrixXd mb = Eigen::Map<const RowMajor>(b, static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(d));
    *out = cdst::emd(ma, mb);
  });
}

ds_status ds_ssim(const float* a, const float* b, int height, int width, int channels, double* out) {
  return guarded([&] {
    require(a, "a");
    require(b, "b");
    require(out, "out");
    if (height < 1 || width < 1 || channels < 1) throw UsageError("ssim: invalid image shape");
    Tensor32 ta({height, width, channels}), tb({height, width, channels});
    std::copy(a, a + ta.size(), ta.raw().begin());
    std::copy(b, b + tb.size(), tb.raw().begin());
    *out = metrics::ssim(ta, tb);
  });
}

ds_status ds_shapiro_wilk(const double* x, size_t n, double* w, double* p) {
  return guarded([&] {
    require(w, "w");
    require(p, "p");
    if (n) require(x, "x");
    const auto r = cdst::shapiro_wilk(std::vector<double>(x, x + n));
    *w = r.w;
    *p = r.p;
  });
}

}  // extern "C"
