/**
 * Binary tensor container writer/reader.
 *
 * Layout: 4-byte magic "DTEN", version byte (1), dtype byte (0=f32, 1=f64),
 * ndim byte (<= 8), one reserved zero byte, then ndim little-endian u64
 * extents followed by the row-major little-endian payload.
 */

const MAGIC = 'DTEN';
const VERSION = 1;
const MAX_NDIM = 8;

export function encodeTensorF32(data: Float32Array, shape: number[]): Buffer {
  if (shape.length > MAX_NDIM) {
    throw new Error(`ndim ${shape.length} exceeds ${MAX_NDIM}`);
  }
  const count = shape.reduce((a, b) => a * b, 1);
  if (count !== data.length) {
    throw new Error(`shape ${JSON.stringify(shape)} does not match ${data.length} values`);
  }
  const header = Buffer.alloc(8 + 8 * shape.length);
  header.write(MAGIC, 0, 'ascii');
  header.writeUInt8(VERSION, 4);
  header.writeUInt8(0, 5); // f32
  header.writeUInt8(shape.length, 6);
  header.writeUInt8(0, 7);
  shape.forEach((extent, i) => header.writeBigUInt64LE(BigInt(extent), 8 + 8 * i));
  const payload = Buffer.alloc(4 * data.length);
  for (let i = 0; i < data.length; i++) {
    payload.writeFloatLE(data[i], 4 * i);
  }
  return Buffer.concat([header, payload]);
}

export interface DecodedTensor {
  dtype: 'f32' | 'f64';
  shape: number[];
  data: Float64Array;
}

export function decodeTensor(blob: Buffer): DecodedTensor {
  if (blob.length < 8 || blob.toString('ascii', 0, 4) !== MAGIC) {
    throw new Error('bad magic');
  }
  if (blob.readUInt8(4) !== VERSION) {
    throw new Error(`unsupported version ${blob.readUInt8(4)}`);
  }
  const dtypeCode = blob.readUInt8(5);
  if (dtypeCode !== 0 && dtypeCode !== 1) {
    throw new Error(`unknown dtype code ${dtypeCode}`);
  }
  const ndim = blob.readUInt8(6);
  if (ndim > MAX_NDIM) {
    throw new Error(`ndim ${ndim} exceeds ${MAX_NDIM}`);
  }
  const shape: number[] = [];
  for (let i = 0; i < ndim; i++) {
    shape.push(Number(blob.readBigUInt64LE(8 + 8 * i)));
  }
  const count = shape.reduce((a, b) => a * b, 1);
  const width = dtypeCode === 0 ? 4 : 8;
  const offset = 8 + 8 * ndim;
  if (blob.length < offset + count * width) {
    throw new Error('truncated payload');
  }
  const data = new Float64Array(count);
  for (let i = 0; i < count; i++) {
    data[i] = dtypeCode === 0 ? blob.readFloatLE(offset + 4 * i) : blob.readDoubleLE(offset + 8 * i);
  }
  return { dtype: dtypeCode === 0 ? 'f32' : 'f64', shape, data };
}
