#include "amtgan/training.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>

#include "amtgan/error.hpp"
#include "amtgan/histogram_makeup.hpp"

namespace amtgan::training {

using torch::optim::Adam;
using torch::optim::AdamOptions;
using torch::optim::AdamParamState;

void TrainConfig::validate() const {
  if (epochs < 1) throw ConfigError("training.epochs must be >= 1");
  if (max_steps < 0) throw ConfigError("training.max_steps must be >= 0");
  if (batch_size < 1) throw ConfigError("training.batch_size must be >= 1");
  if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate)) {
    throw ConfigError("training.learning_rate must be finite and >= 0");
  }
  if (!(adam_beta1 >= 0.0 && adam_beta1 < 1.0) || !(adam_beta2 >= 0.0 && adam_beta2 < 1.0)) {
    throw ConfigError("adam betas must lie in [0, 1)");
  }
  if (checkpoint_every < 0) throw ConfigError("training.checkpoint_every must be >= 0");
  if (ensemble_ids.empty()) throw ConfigError("training.ensemble must name at least one model");
  for (int id : ensemble_ids) {
    if (id == holdout_id) throw ConfigError("holdout model must not be part of the ensemble");
  }
  weights.validate();
  diversity.validate();
}

GanNets GanNets::make(const TrainConfig& config) {
  const std::uint64_t base = config.seed * 1000;
  auto g_opts = config.generator;
  g_opts.seed += base;
  auto dx_opts = config.discriminator;
  dx_opts.seed += base;
  auto dy_opts = config.discriminator;
  dy_opts.seed += base + 500;
  auto h_opts = config.regularizer;
  h_opts.seed += base;
  return {nets::Generator(g_opts), nets::Discriminator(dx_opts), nets::Discriminator(dy_opts),
          nets::Regularizer(h_opts)};
}

namespace {

std::vector<Tensor> concat_params(const torch::nn::Module& a, const torch::nn::Module& b) {
  auto p = a.parameters();
  for (const auto& q : b.parameters()) p.push_back(q);
  return p;
}

// (name, parameter) pairs in optimizer order for each parameter group.
std::vector<std::pair<std::string, Tensor>> named(const std::string& prefix,
                                                  const torch::nn::Module& m) {
  std::vector<std::pair<std::string, Tensor>> out;
  for (const auto& p : m.named_parameters()) out.emplace_back(prefix + p.key(), p.value());
  return out;
}

void save_adam(const Adam& opt, const std::vector<std::pair<std::string, Tensor>>& params,
               Checkpoint& ck) {
  auto& steps = ck.tensors.meta["adam_steps"];
  if (steps.is_null()) steps = nlohmann::json::object();
  for (const auto& [name, p] : params) {
    const auto it = opt.state().find(p.unsafeGetTensorImpl());
    if (it == opt.state().end()) continue;
    const auto& s = static_cast<const AdamParamState&>(*it->second);
    ck.tensors.put("adam/" + name + "/m", s.exp_avg());
    ck.tensors.put("adam/" + name + "/v", s.exp_avg_sq());
    steps[name] = s.step();
  }
}

void load_adam(Adam& opt, const std::vector<std::pair<std::string, Tensor>>& params,
               const Checkpoint& ck) {
  opt.state().clear();
  const auto& steps = ck.tensors.meta.contains("adam_steps") ? ck.tensors.meta["adam_steps"]
                                                             : nlohmann::json::object();
  for (const auto& [name, p] : params) {
    if (!steps.contains(name)) continue;
    auto s = std::make_unique<AdamParamState>();
    s->step(steps[name].get<int64_t>());
    s->exp_avg(ck.tensors.get("adam/" + name + "/m").to(p.dtype()));
    s->exp_avg_sq(ck.tensors.get("adam/" + name + "/v").to(p.dtype()));
    opt.state()[p.unsafeGetTensorImpl()] = std::move(s);
  }
}

Tensor require_finite(Tensor t, const char* what) {
  if (!std::isfinite(t.item<double>())) throw DivergenceError(std::string(what) + " is not finite");
  return t;
}

}  // namespace

Trainer::Trainer(TrainConfig config, std::vector<ImageFn> ensemble, data::TargetIdentity target)
    : config_(std::move(config)),
      ensemble_(std::move(ensemble)),
      target_(std::move(target)),
      nets_(GanNets::make(config_)),
      perceptual_(nets::RandomPerceptual()),
      rng_(config_.seed * 7919 + 1) {
  config_.validate();
  if (ensemble_.size() != target_.embeddings.size()) {
    throw ConfigError("target identity must carry one embedding per ensemble model");
  }
  const auto opts = [&] {
    return AdamOptions(config_.learning_rate)
        .betas(std::make_tuple(config_.adam_beta1, config_.adam_beta2));
  };
  opt_d_ = std::make_unique<Adam>(concat_params(*nets_.d_x, *nets_.d_y), opts());
  opt_g_ = std::make_unique<Adam>(nets_.g->parameters(), opts());
  opt_h_ = std::make_unique<Adam>(nets_.h->parameters(), opts());
}

ImageFn Trainer::h_fn() {
  if (!config_.use_regularizer) return [](const Tensor& t) { return t; };
  return nets::as_image_fn(nets_.h);
}

Trainer::StepInputs Trainer::prepare(const data::PairBatch& batch) const {
  return {batch.x, batch.y,
          makeup::histogram_match_batch(batch.x, batch.masks_x, batch.y, batch.masks_y),
          makeup::histogram_match_batch(batch.y, batch.masks_y, batch.x, batch.masks_x)};
}

double Trainer::update_discriminators(const StepInputs& in) {
  Tensor gxy;
  Tensor gyx;
  {
    torch::NoGradGuard no_grad;
    gxy = nets_.g->forward(in.x, in.y);
    gyx = nets_.g->forward(in.y, in.x);
  }
  nets_.d_x->refresh_spectral_estimates();
  nets_.d_y->refresh_spectral_estimates();
  opt_d_->zero_grad();
  const Tensor l_d = losses::gan_loss_D(nets::as_logit_fn(nets_.d_x), nets::as_logit_fn(nets_.d_y),
                                        in.x, in.y, gxy, gyx);
  Tensor objective = l_d;
  if (config_.use_regularizer) {
    Tensor hxy;
    Tensor hyx;
    {
      torch::NoGradGuard no_grad;
      hxy = nets_.h->forward(gxy);
      hyx = nets_.h->forward(gyx);
    }
    objective = 0.5 * (l_d + losses::gan_loss_D(nets::as_logit_fn(nets_.d_x),
                                                nets::as_logit_fn(nets_.d_y), in.x, in.y, hxy, hyx));
  }
  (config_.weights.gan * objective).backward();
  opt_d_->step();
  return l_d.item<double>();
}

losses::LossTerms Trainer::update_generator(const StepInputs& in) {
  const auto& w = config_.weights;
  const PairFn g = nets::as_pair_fn(nets_.g);
  const ImageFn h = h_fn();
  const ImageFn d_x = nets::as_logit_fn(nets_.d_x);
  const ImageFn d_y = nets::as_logit_fn(nets_.d_y);

  opt_g_->zero_grad();
  const Tensor gxy = g(in.x, in.y);
  const Tensor gyx = g(in.y, in.x);
  const Tensor l_gan = losses::gan_loss_G(d_x, d_y, gxy, gyx);
  const Tensor l_reg = losses::reg_cycle_loss(g, h, in.x, in.y, gxy, gyx);
  const Tensor l_adv =
      losses::adv_loss_G(ensemble_, target_.embeddings, gxy, gyx, config_.diversity, rng_);
  const Tensor l_make = losses::makeup_loss(gxy, in.hm_xy) + losses::makeup_loss(gyx, in.hm_yx);
  const Tensor l_idt = losses::idt_loss(g, h, in.x, in.y, nets::as_distance_fn(perceptual_));
  const Tensor total = require_finite(
      w.gan * l_gan + w.reg * l_reg + w.adv * l_adv + w.make * l_make + w.idt * l_idt, "L_G");
  total.backward();
  opt_g_->step();

  losses::LossTerms t;
  t.g_gan = l_gan.item<double>();
  t.g_reg = l_reg.item<double>();
  t.g_adv = l_adv.item<double>();
  t.g_make = l_make.item<double>();
  t.idt = l_idt.item<double>();
  return t;
}

losses::LossTerms Trainer::update_regularizer(const StepInputs& in) {
  const auto& w = config_.weights;
  Tensor gxy;
  Tensor gyx;
  Tensor gxx;
  Tensor gyy;
  {
    torch::NoGradGuard no_grad;
    gxy = nets_.g->forward(in.x, in.y);
    gyx = nets_.g->forward(in.y, in.x);
    gxx = nets_.g->forward(in.x, in.x);
    gyy = nets_.g->forward(in.y, in.y);
  }
  const ImageFn h = nets::as_image_fn(nets_.h);
  opt_h_->zero_grad();
  const Tensor hxy = h(gxy);
  const Tensor hyx = h(gyx);
  // gan_loss_H(D, H, gxy, gyx) evaluated on the H outputs already computed.
  const Tensor l_gan = losses::gan_loss_G(nets::as_logit_fn(nets_.d_x),
                                          nets::as_logit_fn(nets_.d_y), hxy, hyx);
  const Tensor l_adv = losses::adv_loss_H(ensemble_, in.x, in.y, hxy, hyx);
  const Tensor l_make = losses::makeup_loss(hxy, in.hm_xy) + losses::makeup_loss(hyx, in.hm_yx);
  const Tensor l_idt =
      losses::idt_loss_from(h(gxx), in.x, h(gyy), in.y, nets::as_distance_fn(perceptual_));
  const Tensor total = require_finite(
      w.gan * l_gan + w.adv * l_adv + w.make * l_make + w.idt * l_idt, "L_H");
  total.backward();
  opt_h_->step();

  losses::LossTerms t;
  t.h_gan = l_gan.item<double>();
  t.h_adv = l_adv.item<double>();
  t.h_make = l_make.item<double>();
  t.idt = l_idt.item<double>();
  return t;
}

StepTrace Trainer::train_step(const data::PairBatch& batch) {
  const auto start = std::chrono::steady_clock::now();
  const StepInputs in = prepare(batch);
  const double d_gan = update_discriminators(in);
  losses::LossTerms terms = update_generator(in);
  terms.d_gan = d_gan;
  if (config_.use_regularizer) {
    const auto h = update_regularizer(in);
    terms.h_gan = h.h_gan;
    terms.h_adv = h.h_adv;
    terms.h_make = h.h_make;
  }
  ++step_;
  StepTrace trace;
  trace.step = step_;
  trace.report = losses::totals(terms, config_.weights);
  trace.wall_ms =
      std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
  return trace;
}

void Trainer::save_state(Checkpoint& ck) const {
  ck.step = step_;
  put_module(ck.tensors, "net/g/", *nets_.g);
  put_module(ck.tensors, "net/d_x/", *nets_.d_x);
  put_module(ck.tensors, "net/d_y/", *nets_.d_y);
  put_module(ck.tensors, "net/h/", *nets_.h);
  auto d_params = named("d_x/", *nets_.d_x);
  for (auto& p : named("d_y/", *nets_.d_y)) d_params.push_back(p);
  save_adam(*opt_d_, d_params, ck);
  save_adam(*opt_g_, named("g/", *nets_.g), ck);
  save_adam(*opt_h_, named("h/", *nets_.h), ck);
  ck.rng_states["trainer"] = rng_.state();
}

void Trainer::load_state(const Checkpoint& ck) {
  get_module(ck.tensors, "net/g/", *nets_.g);
  get_module(ck.tensors, "net/d_x/", *nets_.d_x);
  get_module(ck.tensors, "net/d_y/", *nets_.d_y);
  get_module(ck.tensors, "net/h/", *nets_.h);
  auto d_params = named("d_x/", *nets_.d_x);
  for (auto& p : named("d_y/", *nets_.d_y)) d_params.push_back(p);
  load_adam(*opt_d_, d_params, ck);
  load_adam(*opt_g_, named("g/", *nets_.g), ck);
  load_adam(*opt_h_, named("h/", *nets_.h), ck);
  const auto it = ck.rng_states.find("trainer");
  if (it == ck.rng_states.end()) throw IntegrityError("checkpoint lacks trainer rng state");
  rng_.set_state(it->second);
  step_ = ck.step;
}

void save_checkpoint(const Checkpoint& ck, const std::filesystem::path& path) {
  Archive a = ck.tensors;
  a.meta["step"] = ck.step;
  a.meta["config_hash"] = ck.config_hash;
  a.meta["config"] = ck.config;
  a.meta["rng"] = ck.rng_states;
  a.meta["kind"] = "amtgan-checkpoint";
  save_archive(a, path);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  Archive a = load_archive(path);
  Checkpoint ck;
  try {
    if (a.meta.at("kind").get<std::string>() != "amtgan-checkpoint") {
      throw IntegrityError(path.string() + " is not a training checkpoint");
    }
    ck.step = a.meta.at("step").get<std::int64_t>();
    ck.config_hash = a.meta.at("config_hash").get<std::string>();
    ck.config = a.meta.at("config");
    ck.rng_states = a.meta.at("rng").get<std::map<std::string, std::string>>();
  } catch (const nlohmann::json::exception& e) {
    throw IntegrityError(std::string("checkpoint header is malformed: ") + e.what());
  }
  for (const char* key : {"step", "config_hash", "config", "rng", "kind"}) a.meta.erase(key);
  ck.tensors = std::move(a);
  return ck;
}

void write_trace_header(std::ostream& out) {
  out << "step,l_d,l_g_gan,l_g_reg,l_g_adv,l_g_make,l_idt,l_h_gan,l_h_adv,l_h_make,"
         "l_g_total,l_h_total,l_d_total,wall_ms\n";
}

void write_trace_row(std::ostream& out, const StepTrace& s) {
  const auto& t = s.report.terms;
  char buf[1024];
  std::snprintf(buf, sizeof(buf),
                "%lld,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.3f\n",
                static_cast<long long>(s.step), t.d_gan, t.g_gan, t.g_reg, t.g_adv, t.g_make, t.idt,
                t.h_gan, t.h_adv, t.h_make, s.report.g_total, s.report.h_total, s.report.d_total,
                s.wall_ms);
  out << buf;
}

std::int64_t total_steps(const TrainConfig& config, std::size_t num_sources) {
  const auto per_epoch = static_cast<std::int64_t>(
      (num_sources + static_cast<std::size_t>(config.batch_size) - 1) /
      static_cast<std::size_t>(config.batch_size));
  std::int64_t total = per_epoch * config.epochs;
  if (config.max_steps > 0) total = std::min(total, config.max_steps);
  return total;
}

TrainResult train(const TrainRequest& req) {
  req.config.validate();
  auto stream = data::make_pair_stream(req.sources, req.references, req.config.seed * 104729 + 3);
  Trainer trainer(req.config, req.ensemble, req.target);

  if (req.resume_from) {
    const Checkpoint& ck = *req.resume_from;
    if (ck.config_hash != req.config_hash) {
      if (!req.force) {
        throw ConfigError("checkpoint config hash " + ck.config_hash +
                          " differs from the current config " + req.config_hash +
                          "; pass --force to resume anyway");
      }
      std::cerr << "warning: resuming from a checkpoint with a different config hash\n";
    }
    trainer.load_state(ck);
    const auto it = ck.rng_states.find("pairs");
    if (it == ck.rng_states.end()) throw IntegrityError("checkpoint lacks pair-stream rng state");
    stream.rng().set_state(it->second);
  }

  std::int64_t total = total_steps(req.config, req.sources->size());
  if (req.stop_after > 0) total = std::min(total, req.stop_after);

  const bool write = !req.run_dir.empty();
  std::ofstream trace_csv;
  if (write) {
    std::filesystem::create_directories(req.run_dir / "checkpoints");
    const auto trace_path = req.run_dir / "trace.csv";
    const bool append = req.resume_from.has_value() && std::filesystem::exists(trace_path);
    trace_csv.open(trace_path, append ? std::ios::app : std::ios::trunc);
    if (!trace_csv) throw IoError("cannot open " + trace_path.string());
    if (!append) write_trace_header(trace_csv);
  }

  TrainResult result;
  const auto snapshot = [&] {
    Checkpoint ck;
    ck.config_hash = req.config_hash;
    ck.config = req.run_config;
    trainer.save_state(ck);
    ck.rng_states["pairs"] = stream.rng().state();
    return ck;
  };
  const auto write_checkpoint = [&](const Checkpoint& ck) {
    char name[64];
    std::snprintf(name, sizeof(name), "step_%08lld.ckpt", static_cast<long long>(ck.step));
    const auto path = req.run_dir / "checkpoints" / name;
    save_checkpoint(ck, path);
    result.last_checkpoint_path = path;
  };

  while (trainer.step() < total) {
    const auto batch = stream.next_batch(req.config.batch_size);
    StepTrace trace;
    try {
      trace = trainer.train_step(batch);
    } catch (const DivergenceError& e) {
      const auto last = result.last_checkpoint_path.empty() ? std::string("none")
                                                            : result.last_checkpoint_path.string();
      throw DivergenceError(std::string(e.what()) + " at step " +
                            std::to_string(trainer.step() + 1) + "; last checkpoint: " + last);
    }
    result.trace.push_back(trace);
    if (write) {
      write_trace_row(trace_csv, trace);
      trace_csv.flush();
      if (req.config.checkpoint_every > 0 && trace.step % req.config.checkpoint_every == 0 &&
          trace.step < total) {
        write_checkpoint(snapshot());
      }
    }
  }
  result.final_checkpoint = snapshot();
  if (write) write_checkpoint(result.final_checkpoint);
  return result;
}

}  // namespace amtgan::training
