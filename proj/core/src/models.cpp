#include "genmix/models.hpp"

namespace genmix {

namespace {

void add_conv(NetworkModel& m, Rng& rng, const std::string& name, int in_c, int out_c,
              int k, int pad) {
  auto conv = std::make_unique<Conv2d>(name, in_c, out_c, k, pad);
  conv->init(rng);
  m.add(std::move(conv));
}

void add_dense(NetworkModel& m, Rng& rng, const std::string& name, int in_f, int out_f) {
  auto fc = std::make_unique<Dense>(name, in_f, out_f);
  fc->init(rng);
  m.add(std::move(fc));
}

}  // namespace

NetworkModel build_generator(Rng rng, std::string name) {
  NetworkModel m(std::move(name), Role::Generator);
  int idx = 1;
  auto block = [&](int in_c) {
    const std::string i = std::to_string(idx);
    add_conv(m, rng, "conv" + i, in_c, 32, 3, 1);
    m.add(std::make_unique<Elu>("elu" + i));
    m.add(std::make_unique<BatchNorm2d>("bn" + i, 32));
    ++idx;
  };
  block(1);
  block(32);
  block(32);
  block(32);
  add_conv(m, rng, "conv5", 32, 1, 3, 1);
  m.add(std::make_unique<Sigmoid>("sigmoid"));
  return m;
}

NetworkModel build_discriminator(Rng rng, std::string name) {
  NetworkModel m(std::move(name), Role::Discriminator);
  add_conv(m, rng, "conv1", 1, 16, 3, 1);
  m.add(std::make_unique<Elu>("elu1"));
  add_conv(m, rng, "conv2", 16, 16, 3, 1);
  m.add(std::make_unique<Elu>("elu2"));
  add_conv(m, rng, "conv3", 16, 16, 3, 1);
  m.add(std::make_unique<Elu>("elu3"));
  m.add(std::make_unique<AvgPool2>("pool1"));
  add_conv(m, rng, "conv4", 16, 32, 3, 1);
  m.add(std::make_unique<Elu>("elu4"));
  add_conv(m, rng, "conv5", 32, 32, 3, 1);
  m.add(std::make_unique<Elu>("elu5"));
  m.add(std::make_unique<AvgPool2>("pool2"));
  add_conv(m, rng, "conv6", 32, 64, 3, 1);
  m.add(std::make_unique<Elu>("elu6"));
  add_conv(m, rng, "conv7", 64, 64, 3, 1);
  m.add(std::make_unique<Elu>("elu7"));
  m.add(std::make_unique<AvgPool2>("pool3"));
  m.add(std::make_unique<Flatten>("flatten"));
  // 28 -> 14 -> 7 -> 3 under floor pooling, so 64*3*3 features.
  add_dense(m, rng, "fc1", 576, 1024);
  m.add(std::make_unique<Elu>("elu8"));
  add_dense(m, rng, "fc2", 1024, 1);
  m.add(std::make_unique<Sigmoid>("sigmoid"));
  return m;
}

NetworkModel build_classifier(Rng rng, std::string name) {
  NetworkModel m(std::move(name), Role::Classifier);
  add_conv(m, rng, "conv1", 1, 6, 5, 2);
  m.add(std::make_unique<Relu>("relu1"));
  m.add(std::make_unique<MaxPool2>("pool1"));
  add_conv(m, rng, "conv2", 6, 16, 5, 0);
  m.add(std::make_unique<Relu>("relu2"));
  m.add(std::make_unique<MaxPool2>("pool2"));
  m.add(std::make_unique<Flatten>("flatten"));
  add_dense(m, rng, "fc1", 400, 120);
  m.add(std::make_unique<Relu>("relu3"));
  add_dense(m, rng, "fc2", 120, 84);
  m.add(std::make_unique<Relu>("relu4"));
  add_dense(m, rng, "fc3", 84, 10);
  return m;
}

NetworkModel build_large_generator(Rng rng, std::string name) {
  NetworkModel m(std::move(name), Role::LargeGenerator);
  const int ladder[] = {1, 32, 64, 128, 128, 64, 32};
  for (int i = 0; i + 1 < 7; ++i) {
    const std::string idx = std::to_string(i + 1);
    add_conv(m, rng, "conv" + idx, ladder[i], ladder[i + 1], 3, 1);
    m.add(std::make_unique<Elu>("elu" + idx));
    m.add(std::make_unique<BatchNorm2d>("bn" + idx, ladder[i + 1]));
  }
  add_conv(m, rng, "conv7", 32, 1, 3, 1);
  m.add(std::make_unique<Sigmoid>("sigmoid"));
  return m;
}

}  // namespace genmix
