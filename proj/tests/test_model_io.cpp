#include <gtest/gtest.h>

#include <cstdio>
#include <filesystem>

#include "ppann/model_io.hpp"

using namespace ppann;

TEST(ModelIo, RoundTripIsBitExact) {
  for (Architecture a : {Architecture::Type1, Architecture::Type2, Architecture::Type3, Architecture::Type1M}) {
    PannModel m(Picnn::initialized(default_config(a, a == Architecture::Type1M ? 2 : 1), 5), 3.3730383970977869);
    m.net.params().values[0] = 0.1 + 0.2;  // not representable in few digits
    m.metadata["dataset_hash"] = "0123456789abcdef";
    m.metadata["optimizer"] = "adam lr=0.002";
    m.normalisation = a != Architecture::Type2;
    const std::string text = serialize_model(m);
    const PannModel back = deserialize_model(text);
    EXPECT_EQ(back.net.config(), m.net.config());
    EXPECT_EQ(back.net.params(), m.net.params());
    EXPECT_EQ(back.stress_scale, m.stress_scale);
    EXPECT_EQ(back.normalisation, m.normalisation);
    EXPECT_EQ(back.growth, m.growth);
    EXPECT_EQ(back.metadata, m.metadata);
    EXPECT_EQ(serialize_model(back), text);
  }
}

TEST(ModelIo, FileRoundTrip) {
  const PannModel m(Picnn::initialized(default_config(Architecture::Type3, 1), 9));
  const auto path = (std::filesystem::temp_directory_path() / "ppann_model_roundtrip.txt").string();
  save_model(m, path);
  EXPECT_EQ(load_model(path).net.params(), m.net.params());
  std::remove(path.c_str());
}

TEST(ModelIo, RejectsMalformedFiles) {
  const std::string good = serialize_model(PannModel(Picnn::initialized(default_config(Architecture::Type1, 1), 1)));
  EXPECT_THROW(deserialize_model("pann-model v2\n"), IoError);
  EXPECT_THROW(deserialize_model(good.substr(0, good.size() / 2)), IoError);
  std::string wrong_count = good;
  wrong_count.replace(wrong_count.find("params 272"), 10, "params 271");
  EXPECT_THROW(deserialize_model(wrong_count), IoError);
  std::string bad_kind = good;
  bad_kind.replace(bad_kind.find("Type1"), 5, "Type9");
  EXPECT_THROW(deserialize_model(bad_kind), IoError);
  EXPECT_THROW(load_model("/nonexistent/model.txt"), IoError);
}
