#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "lwta/attacks.hpp"
#include "lwta/baseline.hpp"
#include "lwta/data.hpp"
#include "lwta/layers.hpp"
#include "lwta/model_io.hpp"
#include "lwta/objective.hpp"
#include "lwta/training.hpp"

namespace py = pybind11;

namespace {

using lwta::Tensor;
using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;

Tensor from_numpy(const Array& a) {
  lwta::Shape shape(a.shape(), a.shape() + a.ndim());
  return Tensor(shape, std::vector<double>(a.data(), a.data() + a.size()));
}

Array to_numpy(const Tensor& t) {
  std::vector<py::ssize_t> shape(t.shape().begin(), t.shape().end());
  Array out(shape);
  std::copy(t.data().begin(), t.data().end(), out.mutable_data());
  return out;
}

py::array_t<std::int64_t> labels_to_numpy(const std::vector<std::size_t>& labels) {
  py::array_t<std::int64_t> out(static_cast<py::ssize_t>(labels.size()));
  auto* p = out.mutable_data();
  for (std::size_t i = 0; i < labels.size(); ++i) p[i] = static_cast<std::int64_t>(labels[i]);
  return out;
}

std::vector<std::size_t> labels_from(const py::array_t<std::int64_t, py::array::c_style | py::array::forcecast>& a) {
  std::vector<std::size_t> out;
  out.reserve(static_cast<std::size_t>(a.size()));
  for (py::ssize_t i = 0; i < a.size(); ++i) {
    if (a.data()[i] < 0) throw lwta::ContractError("labels must be non-negative");
    out.push_back(static_cast<std::size_t>(a.data()[i]));
  }
  return out;
}

lwta::Dataset make_dataset(const Array& images, const py::array_t<std::int64_t, py::array::c_style | py::array::forcecast>& labels,
                           std::size_t classes) {
  lwta::Dataset d;
  d.images = from_numpy(images);
  d.labels = labels_from(labels);
  d.classes = classes;
  d.validate();
  return d;
}

lwta::SampleMode parse_mode(const std::string& s) {
  if (s == "hard") return lwta::SampleMode::hard;
  if (s == "relaxed") return lwta::SampleMode::relaxed;
  if (s == "argmax") return lwta::SampleMode::argmax;
  throw lwta::ParameterError("unknown sample mode '" + s + "'");
}

}  // namespace

PYBIND11_MODULE(_lwta, m) {
  m.doc() = "Stochastic local winner-takes-all networks";
  m.attr("__version__") = LWTA_VERSION;

  auto base = py::register_exception<lwta::Error>(m, "LwtaError");
  py::register_exception<lwta::ParameterError>(m, "ParameterError", base.ptr());
  py::register_exception<lwta::DimensionError>(m, "DimensionError", base.ptr());
  py::register_exception<lwta::ContractError>(m, "ContractError", base.ptr());
  py::register_exception<lwta::FormatError>(m, "FormatError", base.ptr());
  py::register_exception<lwta::ModelIoError>(m, "ModelIoError", base.ptr());

  py::class_<lwta::Dataset>(m, "Dataset")
      .def(py::init(&make_dataset), py::arg("images"), py::arg("labels"), py::arg("classes"))
      .def_property_readonly("images", [](const lwta::Dataset& d) { return to_numpy(d.images); })
      .def_property_readonly("labels", [](const lwta::Dataset& d) { return labels_to_numpy(d.labels); })
      .def_readonly("classes", &lwta::Dataset::classes)
      .def("__len__", &lwta::Dataset::size)
      .def("fingerprint", [](const lwta::Dataset& d) { return lwta::fingerprint(d); });

  m.def("load_idx", [](const std::filesystem::path& img, const std::filesystem::path& lbl,
                       std::size_t classes) { return lwta::load_idx(img, lbl, classes); },
        py::arg("images"), py::arg("labels"), py::arg("classes") = 0);
  m.def("write_idx", &lwta::write_idx, py::arg("data"), py::arg("images"), py::arg("labels"));
  m.def("load_cifar10_file", &lwta::load_cifar10_file, py::arg("path"));
  m.def("synth_blobs", &lwta::synth_blobs, py::arg("classes"), py::arg("n_per_class"), py::arg("dim"),
        py::arg("separation"), py::arg("seed"), py::arg("noise") = 0.1);
  m.def("reshape_images", &lwta::reshape_images, py::arg("data"), py::arg("height"), py::arg("width"),
        py::arg("channels"));

  py::class_<lwta::Network>(m, "Network")
      .def_property_readonly("classes", [](const lwta::Network& n) { return n.classes; })
      .def_property_readonly("input_shape",
                             [](const lwta::Network& n) {
                               return py::make_tuple(n.input.height, n.input.width, n.input.channels);
                             })
      .def_readwrite("temperature", &lwta::Network::temperature)
      .def_property_readonly("parameter_count", &lwta::Network::parameter_count)
      .def_property_readonly("is_stochastic", &lwta::Network::is_stochastic)
      .def("parameters",
           [](const lwta::Network& n) {
             py::list out;
             for (const auto& t : n.parameters()) out.append(to_numpy(t));
             return out;
           })
      .def("__repr__", [](const lwta::Network& n) { return lwta::describe(n); });

  m.def(
      "build_network",
      [](const std::string& arch, std::size_t height, std::size_t width, std::size_t channels, std::size_t classes,
         std::uint64_t seed, double temperature) {
        auto spec = lwta::parse_architecture(arch, lwta::InputShape{height, width, channels}, classes);
        spec.temperature = temperature;
        lwta::Rng rng = lwta::Rng(seed).derive(0x1417);
        return lwta::init_weights(spec, rng);
      },
      py::arg("arch"), py::arg("height"), py::arg("width"), py::arg("channels"), py::arg("classes"),
      py::arg("seed") = 0, py::arg("temperature") = lwta::kDefaultTemperature);
  m.def("save_model", &lwta::save_model, py::arg("network"), py::arg("path"));
  m.def("load_model", &lwta::load_model, py::arg("path"));
  m.def("serialize_model", [](const lwta::Network& n) {
    const auto bytes = lwta::serialize_model(n);
    return py::bytes(reinterpret_cast<const char*>(bytes.data()), bytes.size());
  });
  m.def("deserialize_model", [](const py::bytes& b) {
    const std::string s = b;
    return lwta::deserialize_model(std::vector<std::uint8_t>(s.begin(), s.end()));
  });

  m.def(
      "forward",
      [](const lwta::Network& net, const Array& x, const std::string& mode, std::uint64_t seed) {
        lwta::Rng rng(seed);
        lwta::NoGradGuard guard;
        const auto r = lwta::forward(net, from_numpy(x), {parse_mode(mode), net.temperature}, rng);
        py::list winners;
        for (const auto& w : r.winners) winners.append(to_numpy(w.sample));
        return py::make_tuple(to_numpy(r.logits), winners);
      },
      py::arg("network"), py::arg("x"), py::arg("mode") = "hard", py::arg("seed") = 0);
  m.def(
      "predict",
      [](const lwta::Network& net, const Array& x, std::size_t samples, std::uint64_t seed) {
        lwta::Rng rng(seed);
        return to_numpy(lwta::predict(from_numpy(x), net, samples, rng).probs);
      },
      py::arg("network"), py::arg("x"), py::arg("samples") = 1, py::arg("seed") = 0);
  m.def(
      "gumbel_softmax",
      [](const Array& log_probs, double temperature, std::uint64_t seed) {
        lwta::Rng rng(seed);
        return to_numpy(lwta::sample_gumbel_softmax(from_numpy(log_probs), temperature, rng));
      },
      py::arg("log_probs"), py::arg("temperature"), py::arg("seed") = 0);

  m.def(
      "pgd",
      [](const lwta::Network& net, const Array& x, const py::array_t<std::int64_t>& labels, double epsilon,
         double step_size, std::size_t steps, std::size_t eot, const std::string& loss, bool random_start,
         std::uint64_t seed) {
        lwta::AttackConfig cfg;
        cfg.epsilon = epsilon;
        cfg.step_size = step_size;
        cfg.num_steps = steps;
        cfg.eot_samples = eot;
        cfg.loss = loss == "dlr" ? lwta::AttackLoss::dlr : lwta::AttackLoss::cross_entropy;
        cfg.random_start = random_start;
        cfg.seed = seed;
        cfg.validate();
        lwta::Rng rng(seed);
        return to_numpy(lwta::pgd_linf(from_numpy(x), labels_from(labels), net, cfg, rng));
      },
      py::arg("network"), py::arg("x"), py::arg("labels"), py::arg("epsilon"), py::arg("step_size") = 0.007,
      py::arg("steps") = 20, py::arg("eot") = 1, py::arg("loss") = "ce", py::arg("random_start") = true,
      py::arg("seed") = 0);
  m.def(
      "fgsm",
      [](const lwta::Network& net, const Array& x, const py::array_t<std::int64_t>& labels, double epsilon,
         std::uint64_t seed) {
        lwta::Rng rng(seed);
        return to_numpy(lwta::fgsm(from_numpy(x), labels_from(labels), net, epsilon, rng));
      },
      py::arg("network"), py::arg("x"), py::arg("labels"), py::arg("epsilon"), py::arg("seed") = 0);
  m.def(
      "evaluate",
      [](const lwta::Network& net, const lwta::Dataset& data, double epsilon, std::size_t steps, double step_size,
         std::size_t eot, std::size_t prediction_samples, std::uint64_t seed) {
        lwta::AttackConfig cfg;
        cfg.epsilon = epsilon;
        cfg.num_steps = steps;
        cfg.step_size = step_size;
        cfg.eot_samples = eot;
        cfg.seed = seed;
        cfg.validate();
        lwta::EvaluationOptions opts;
        opts.prediction_samples = prediction_samples;
        const auto r = lwta::evaluate_robustness(data, net, cfg, opts);
        py::dict out;
        out["natural_accuracy"] = r.natural_accuracy;
        out["robust_accuracy"] = r.robust_accuracy;
        out["mean_linf"] = r.mean_linf;
        out["max_linf"] = r.max_linf;
        return out;
      },
      py::arg("network"), py::arg("data"), py::arg("epsilon"), py::arg("steps") = 20, py::arg("step_size") = 0.007,
      py::arg("eot") = 1, py::arg("prediction_samples") = 1, py::arg("seed") = 0);

  m.def(
      "train",
      [](const lwta::Network& net, const lwta::Dataset& data, std::size_t epochs, std::size_t batch_size,
         double epsilon, std::size_t attack_steps, double step_size, double lr0, std::uint64_t seed) {
        lwta::TrainConfig cfg;
        cfg.epochs = epochs;
        cfg.batch_size = batch_size;
        cfg.attack.epsilon = epsilon;
        cfg.attack.num_steps = attack_steps;
        cfg.attack.step_size = step_size;
        cfg.lr0 = lr0;
        cfg.seed = cfg.attack.seed = seed;
        cfg.temperature.initial = cfg.temperature.minimum = net.temperature;
        cfg.validate();
        auto result = [&] {
          py::gil_scoped_release release;
          return lwta::adversarial_train(net, data, cfg);
        }();
        py::list nelbo;
        for (const auto& e : result.history.epochs) nelbo.append(e.nelbo);
        return py::make_tuple(result.network, nelbo);
      },
      py::arg("network"), py::arg("data"), py::arg("epochs") = 1, py::arg("batch_size") = 128,
      py::arg("epsilon") = 0.0, py::arg("attack_steps") = 10, py::arg("step_size") = 0.007, py::arg("lr0") = 0.1,
      py::arg("seed") = 0);
}
