#pragma once

#include <string>

#include "stormcnn/model.hpp"
#include "stormcnn/trainer.hpp"

namespace stormcnn {

// Columns: epoch,train_loss,train_acc,val_loss,val_acc
std::string history_csv(const TrainHistory& history);
std::string history_json(const TrainHistory& history, std::uint64_t seed);

// Columns: tp,fp,fn,tn,accuracy,tpr,tnr,ppv,npv,f1 (undefined ratios are empty cells / null).
std::string metrics_csv(const ConfusionMatrix& cm);
std::string metrics_json(const ConfusionMatrix& cm, std::uint64_t seed);

// Raw counts and the row-normalized matrix side by side; rows are true classes, columns predictions.
std::string confusion_table(const ConfusionMatrix& cm);

// Layer type / output shape / trainable parameter table ending in "Total: N".
std::string parameter_table(const ParameterReport& report, bool show_activations = false);

std::string cv_json(const CrossValidationReport& report, std::uint64_t seed);
std::string tune_csv(const TuneResult& result);

std::string with_thousands(std::size_t value);

}  // namespace stormcnn
