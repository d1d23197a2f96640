export { encodeTensor, decodeTensor, writeTensor, readTensor, Tensor, FormatError, ValidationError, MAGIC, VERSION, DTYPE_F32, DTYPE_U8 } from './ften'
export { ManifestItem, saveManifest, loadManifest } from './manifest'
export { decodePng, imageToInput, maskToBinary, centerCrop, RawImage, IMAGENET_MEAN, IMAGENET_STD } from './image'
export { StageBackbone, loadBackbone, DEFAULT_LAYERS } from './backbone'
export { ExtractSpec, extract, defaultSpec, validateSpec } from './extract'
export { runCli } from './cli'
