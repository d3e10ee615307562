#include <doctest.h>

#include "cstafnet/evaluation.hpp"

using namespace cstafnet;

TEST_CASE("label prediction rules") {
  Matrix p(2, 3);
  p << 0.1, 0.7, 0.2, 0.4, 0.4, 0.2;
  CHECK(predict_labels(p, Head::multiclass) == std::vector<int>{1, 0});
  Matrix tie(1, 2);
  tie << 0.5, 0.5;
  CHECK(predict_labels(tie, Head::multiclass) == std::vector<int>{0});
  Matrix b(3, 1);
  b << 0.5, 0.49, 0.9;
  CHECK(predict_labels(b, Head::binary) == std::vector<int>{1, 0, 1});
}

TEST_CASE("confusion matrix counts") {
  const ConfusionMatrix cm = confusion({0, 1, 1}, {0, 1, 0}, 2);
  CHECK(cm.counts(0, 0) == 1);
  CHECK(cm.counts(0, 1) == 0);
  CHECK(cm.counts(1, 0) == 1);
  CHECK(cm.counts(1, 1) == 1);

  const ConfusionMatrix perfect = confusion({0, 1, 2, 2}, {0, 1, 2, 2}, 3);
  CHECK(perfect.counts.diagonal().sum() == perfect.total());

  CHECK_THROWS_AS(confusion({0, 3}, {0, 1}, 2), LabelError);
  CHECK_THROWS_AS(confusion({0}, {0, 1}, 2), ShapeError);
}

TEST_CASE("report on a hand-computed matrix") {
  const ClassificationReport r = report(confusion({0, 1, 1}, {0, 1, 0}, 2));
  CHECK(r.per_class[0].precision == 0.5);
  CHECK(r.per_class[0].recall == 1.0);
  CHECK(std::abs(r.per_class[0].f1 - 2.0 / 3.0) < 1e-15);
  CHECK(r.per_class[1].precision == 1.0);
  CHECK(r.per_class[1].recall == 0.5);
  CHECK(std::abs(r.per_class[1].f1 - 2.0 / 3.0) < 1e-15);
  CHECK(std::abs(r.accuracy - 2.0 / 3.0) < 1e-15);
  CHECK(std::abs(r.macro.f1 - 2.0 / 3.0) < 1e-15);
  CHECK(r.weighted.recall == r.accuracy);
}

TEST_CASE("perfect predictions and zero denominators") {
  const ClassificationReport perfect = report(confusion({0, 1, 1, 0}, {0, 1, 1, 0}, 2));
  CHECK(perfect.accuracy == 1.0);
  CHECK(perfect.macro.precision == 1.0);
  CHECK(perfect.weighted.f1 == 1.0);

  // Class 2 never occurs and is never predicted: zeros, still in the macro mean.
  const ClassificationReport r = report(confusion({0, 1}, {0, 1}, 3));
  CHECK(r.per_class[2].precision == 0.0);
  CHECK(r.per_class[2].recall == 0.0);
  CHECK(r.per_class[2].f1 == 0.0);
  CHECK(r.per_class[2].precision_undefined);
  CHECK(r.per_class[2].recall_undefined);
  CHECK(std::abs(r.macro.f1 - 2.0 / 3.0) < 1e-15);
  CHECK(r.weighted.f1 == 1.0);
}

TEST_CASE("report rendering") {
  const ClassificationReport r = report(confusion({0, 1, 1}, {0, 1, 0}, 2, {"Normal", "DDoS"}));
  const std::string table = r.to_table();
  CHECK(table.find("Precision") != std::string::npos);
  CHECK(table.find("F1-Score") != std::string::npos);
  CHECK(table.find("Macro Average") != std::string::npos);
  CHECK(table.find("Weighted Average") != std::string::npos);
  CHECK(table.find("0.6667") != std::string::npos);
  CHECK(r.to_json()["classes"][1]["name"] == "DDoS");
  CHECK(r.to_json()["accuracy"].get<double>() == r.accuracy);

  const std::string csv = confusion_to_csv(confusion({0, 1, 1}, {0, 1, 0}, 2, {"Normal", "DDoS"}));
  CHECK(csv == "true\\predicted,Normal,DDoS\nNormal,1,0\nDDoS,1,1\n");
}

TEST_CASE("weighted recall equals accuracy on awkward supports") {
  for (int n = 1; n <= 60; ++n) {
    std::vector<int> yt, yp;
    for (int i = 0; i < n; ++i) {
      yt.push_back(i % 7);
      yp.push_back((i * 3) % 7 == i % 7 ? i % 7 : (i + 1) % 7);
    }
    const ClassificationReport r = report(confusion(yt, yp, 7));
    CHECK(r.weighted.recall == r.accuracy);
  }
}
