#include "mecd.h"

#include <cstring>
#include <string>

#include "pipeline.hpp"

namespace {

thread_local std::string g_last_error;

mecd_status set_error(mecd::Status s, const std::string& msg) {
  g_last_error = msg;
  return static_cast<mecd_status>(s);
}

template <typename F>
mecd_status guarded(F&& f) {
  try {
    f();
    g_last_error.clear();
    return MECD_OK;
  } catch (const mecd::MecdError& e) {
    return set_error(e.status(), e.what());
  } catch (const std::exception& e) {
    return set_error(mecd::Status::Internal, e.what());
  }
}

mecd_status copy_string(const std::string& s, char* buf, size_t len) {
  if (buf == nullptr || len == 0 || s.size() + 1 > len)
    return set_error(mecd::Status::Size,
                     "buffer too small; need " + std::to_string(s.size() + 1) + " bytes");
  std::memcpy(buf, s.c_str(), s.size() + 1);
  return MECD_OK;
}

// Status enums in mecd.h mirror mecd::Status one-to-one.
static_assert(MECD_OK == static_cast<int>(mecd::Status::Ok));
static_assert(MECD_E_SCHEMA == static_cast<int>(mecd::Status::Schema));
static_assert(MECD_E_LENGTH == static_cast<int>(mecd::Status::Length));
static_assert(MECD_E_RANGE == static_cast<int>(mecd::Status::Range));
static_assert(MECD_E_MAGIC == static_cast<int>(mecd::Status::Magic));
static_assert(MECD_E_TRUNCATED == static_cast<int>(mecd::Status::Truncated));
static_assert(MECD_E_INDEX == static_cast<int>(mecd::Status::Index));
static_assert(MECD_E_CONFIG == static_cast<int>(mecd::Status::Config));
static_assert(MECD_E_DIM == static_cast<int>(mecd::Status::Dim));
static_assert(MECD_E_SHAPE == static_cast<int>(mecd::Status::Shape));
static_assert(MECD_E_SIZE == static_cast<int>(mecd::Status::Size));
static_assert(MECD_E_PARAM == static_cast<int>(mecd::Status::Param));
static_assert(MECD_E_EMPTY == static_cast<int>(mecd::Status::Empty));
static_assert(MECD_E_IO == static_cast<int>(mecd::Status::Io));
static_assert(MECD_E_USAGE == static_cast<int>(mecd::Status::Usage));
static_assert(MECD_E_INTERNAL == static_cast<int>(mecd::Status::Internal));

}  // namespace

struct mecd_config {
  mecd::RunConfig cfg;
};

struct mecd_dataset {
  mecd::LoadedSplit split;
};

struct mecd_model {
  mecd::TrainedModel tm;
};

extern "C" {

const char* mecd_status_name(mecd_status status) {
  return mecd::status_name(static_cast<mecd::Status>(status));
}

const char* mecd_last_error(void) { return g_last_error.c_str(); }

mecd_status mecd_config_create(mecd_config** out) {
  return guarded([&] { *out = new mecd_config(); });
}

mecd_status mecd_config_load_file(mecd_config* cfg, const char* path) {
  return guarded([&] { cfg->cfg.load_file(path); });
}

mecd_status mecd_config_set(mecd_config* cfg, const char* key, const char* value) {
  return guarded([&] { cfg->cfg.set(key, value); });
}

mecd_status mecd_config_get(const mecd_config* cfg, const char* key, char* buf, size_t buf_len) {
  std::string value;
  mecd_status st = guarded([&] { value = cfg->cfg.get(key); });
  if (st != MECD_OK) return st;
  return copy_string(value, buf, buf_len);
}

mecd_status mecd_config_write_file(const mecd_config* cfg, const char* path) {
  return guarded([&] { cfg->cfg.write_file(path); });
}

void mecd_config_free(mecd_config* cfg) { delete cfg; }

mecd_status mecd_synth(const mecd_config* cfg, const char* out_dir) {
  return guarded([&] { mecd::run_synth(cfg->cfg, out_dir); });
}

mecd_status mecd_train(const mecd_config* cfg, const char* data_dir, const char* out_dir) {
  return guarded([&] { mecd::run_train(cfg->cfg, data_dir, out_dir); });
}

mecd_status mecd_eval(const mecd_config* cfg, const char* data_dir, const char* checkpoint,
                      const char* out_dir) {
  return guarded([&] { mecd::run_eval(cfg->cfg, data_dir, checkpoint, out_dir); });
}

mecd_status mecd_diagram(const mecd_config* cfg, const char* data_dir, const char* checkpoint,
                         const char* out_dir) {
  return guarded([&] { mecd::run_diagram(cfg->cfg, data_dir, checkpoint, out_dir); });
}

mecd_status mecd_baseline(const mecd_config* cfg, const char* data_dir, const char* out_dir) {
  return guarded([&] { mecd::run_baseline(cfg->cfg, data_dir, out_dir); });
}

mecd_status mecd_perturb(const mecd_config* cfg, const char* data_dir, const char* out_dir) {
  return guarded([&] { mecd::run_perturb(cfg->cfg, data_dir, out_dir); });
}

mecd_status mecd_gradcheck(const mecd_config* cfg, double* max_rel_error) {
  return guarded([&] { *max_rel_error = mecd::run_gradcheck(cfg->cfg); });
}

mecd_status mecd_dataset_open(const char* dir, const char* split, mecd_dataset** out) {
  return guarded([&] {
    auto* ds = new mecd_dataset();
    try {
      ds->split = mecd::load_split(dir, split);
    } catch (...) {
      delete ds;
      throw;
    }
    *out = ds;
  });
}

mecd_status mecd_dataset_num_videos(const mecd_dataset* ds, int* out) {
  return guarded([&] { *out = static_cast<int>(ds->split.samples.size()); });
}

mecd_status mecd_dataset_video_id(const mecd_dataset* ds, int index, char* buf, size_t buf_len) {
  std::string id;
  mecd_status st = guarded([&] {
    if (index < 0 || index >= static_cast<int>(ds->split.samples.size()))
      mecd::fail(mecd::Status::Index, "video index out of range");
    id = ds->split.samples[static_cast<size_t>(index)].video_id;
  });
  if (st != MECD_OK) return st;
  return copy_string(id, buf, buf_len);
}

mecd_status mecd_dataset_relation(const mecd_dataset* ds, int index, int* buf, int cap,
                                  int* n_out) {
  return guarded([&] {
    if (index < 0 || index >= static_cast<int>(ds->split.samples.size()))
      mecd::fail(mecd::Status::Index, "video index out of range");
    const auto& rel = ds->split.samples[static_cast<size_t>(index)].relation;
    if (static_cast<int>(rel.size()) > cap)
      mecd::fail(mecd::Status::Size, "relation buffer too small");
    for (size_t i = 0; i < rel.size(); ++i) buf[i] = rel[i];
    *n_out = static_cast<int>(rel.size());
  });
}

void mecd_dataset_free(mecd_dataset* ds) { delete ds; }

mecd_status mecd_model_load(const char* checkpoint, mecd_model** out) {
  return guarded([&] {
    auto* m = new mecd_model();
    try {
      m->tm = mecd::load_trained(checkpoint);
    } catch (...) {
      delete m;
      throw;
    }
    *out = m;
  });
}

mecd_status mecd_model_predict(const mecd_model* model, const mecd_dataset* ds, int video_index,
                               int* buf, int cap, int* n_out) {
  return guarded([&] {
    if (video_index < 0 || video_index >= static_cast<int>(ds->split.samples.size()))
      mecd::fail(mecd::Status::Index, "video index out of range");
    const auto& sample = ds->split.samples[static_cast<size_t>(video_index)];
    mecd::PreparedVideo pv =
        mecd::prepare_video(sample, ds->split.features.at(sample.video_id), model->tm.vocab,
                            model->tm.model_config.max_caption_len);
    // Prediction is logically const; the forward pass only wires gradient
    // buffers that evaluation never touches.
    auto& net = *const_cast<mecd_model*>(model)->tm.net;
    auto pred = mecd::predict_relations(net, pv, model->tm.causal);
    if (static_cast<int>(pred.size()) > cap)
      mecd::fail(mecd::Status::Size, "prediction buffer too small");
    for (size_t i = 0; i < pred.size(); ++i) buf[i] = pred[i];
    *n_out = static_cast<int>(pred.size());
  });
}

void mecd_model_free(mecd_model* model) { delete model; }

}  // extern "C"
